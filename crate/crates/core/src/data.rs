//! Datasets, UCI Adult ingestion, synthetic generators and minibatches.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// One record as seen by a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

/// Standardization applied to one continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub mean: f64,
    pub scale: f64,
}

/// Category order of one one-hot encoded attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub name: String,
    pub levels: Vec<String>,
}

/// Record of the transforms that produced a [`Dataset`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub source: String,
    pub scales: Vec<ColumnScale>,
    pub categories: Vec<CategoryMap>,
    /// Generating parameter of synthetic data.
    pub true_theta: Option<Vec<f64>>,
}

/// Row-major feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    pub feature_names: Vec<String>,
    pub preprocessing: Preprocessing,
}

impl Dataset {
    /// Builds a dataset from a row-major `features` buffer of width `d`.
    pub fn new(d: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != d * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: d * labels.len(),
                got: features.len(),
            });
        }
        if let Some(i) = features.iter().chain(&labels).position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at flat index {i}")));
        }
        let feature_names = (0..d).map(|j| format!("x{j}")).collect();
        Ok(Self {
            d,
            features,
            labels,
            feature_names,
            preprocessing: Preprocessing::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of feature columns.
    pub fn width(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn record(&self, i: usize) -> Record<'_> {
        Record {
            x: self.row(i),
            y: self.labels[i],
        }
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Copy of `self` with `i`-th record replaced (adjacent dataset).
    pub fn with_record(&self, i: usize, x: &[f64], y: f64) -> Result<Self> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut out = self.clone();
        out.features[i * self.d..(i + 1) * self.d].copy_from_slice(x);
        out.labels[i] = y;
        Ok(out)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            d: self.d,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            preprocessing: self.preprocessing.clone(),
        }
    }

    /// Canonical CSV: header of feature names then `label`, values in
    /// shortest round-trip decimal.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        let mut fields = Vec::with_capacity(self.d + 1);
        for i in 0..self.len() {
            fields.clear();
            fields.extend(self.row(i).iter().map(|v| v.to_string()));
            fields.push(self.labels[i].to_string());
            w.write_record(&fields).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(File::create(path)?))
    }

    /// Reads a canonical CSV written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.is_empty() || &header[header.len() - 1] != "label" {
            return Err(Error::Parse {
                line: 1,
                message: "header must end with a `label` column".into(),
            });
        }
        let d = header.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d + 1 {
                return Err(Error::Schema {
                    line,
                    expected: d + 1,
                    found: rec.len(),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: {field:?}"),
                })?;
                if j < d {
                    features.push(v);
                } else {
                    labels.push(v);
                }
            }
        }
        let mut ds = Self::new(d, features, labels)?;
        ds.feature_names = header.iter().take(d).map(str::to_owned).collect();
        ds.preprocessing.source = "canonical csv".into();
        Ok(ds)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Attribute names of the Adult layout, in file order.
pub const ADULT_COLUMNS: [&str; 14] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
];

const ADULT_CONTINUOUS: [bool; 14] = [
    true, false, true, false, true, false, false, false, false, false, true, true, true, false,
];

/// One complete Adult row before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct AdultRow {
    /// Raw attribute text; continuous ones are parsed in `numbers`.
    pub fields: Vec<String>,
    pub numbers: Vec<f64>,
    pub high_income: bool,
}

/// Parses the Adult text layout. Blank lines and `|` comment lines are
/// skipped; rows with a `?` field are dropped. Labels may carry the trailing
/// period used in the published test file.
pub fn parse_adult<R: BufRead>(input: R) -> Result<Vec<AdultRow>> {
    let mut rows = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('|') {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cells.len() != ADULT_COLUMNS.len() + 1 {
            return Err(Error::Schema {
                line: line_no,
                expected: ADULT_COLUMNS.len() + 1,
                found: cells.len(),
            });
        }
        if cells.contains(&"?") {
            continue;
        }
        let mut numbers = Vec::with_capacity(6);
        for (j, cell) in cells[..ADULT_COLUMNS.len()].iter().enumerate() {
            if ADULT_CONTINUOUS[j] {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("{}: not a number: {cell:?}", ADULT_COLUMNS[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("{}: non-finite value", ADULT_COLUMNS[j]),
                    });
                }
                numbers.push(v);
            }
        }
        let high_income = match cells[ADULT_COLUMNS.len()].trim_end_matches('.') {
            ">50K" => true,
            "<=50K" => false,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown income label {other:?}"),
                })
            }
        };
        rows.push(AdultRow {
            fields: cells[..ADULT_COLUMNS.len()].iter().map(|s| s.to_string()).collect(),
            numbers,
            high_income,
        });
    }
    Ok(rows)
}

/// Encoder fitted on training rows: standardization statistics and one-hot
/// category order (first appearance).
#[derive(Debug, Clone, PartialEq)]
pub struct AdultEncoder {
    scales: Vec<ColumnScale>,
    categories: Vec<CategoryMap>,
}

impl AdultEncoder {
    pub fn fit(rows: &[AdultRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = rows.len() as f64;
        let mut scales = Vec::new();
        let mut categories = Vec::new();
        let mut c = 0;
        for (j, name) in ADULT_COLUMNS.iter().enumerate() {
            if ADULT_CONTINUOUS[j] {
                let mean = rows.iter().map(|r| r.numbers[c]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r.numbers[c] - mean).powi(2)).sum::<f64>() / n;
                let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                scales.push(ColumnScale {
                    name: name.to_string(),
                    mean,
                    scale,
                });
                c += 1;
            } else {
                let mut levels: Vec<String> = Vec::new();
                for r in rows {
                    if !levels.contains(&r.fields[j]) {
                        levels.push(r.fields[j].clone());
                    }
                }
                categories.push(CategoryMap {
                    name: name.to_string(),
                    levels,
                });
            }
        }
        Ok(Self { scales, categories })
    }

    pub fn width(&self) -> usize {
        self.scales.len() + self.categories.iter().map(|c| c.levels.len()).sum::<usize>()
    }

    fn feature_names(&self) -> Vec<String> {
        let (mut s, mut c) = (self.scales.iter(), self.categories.iter());
        let mut names = Vec::with_capacity(self.width());
        for cont in ADULT_CONTINUOUS {
            if cont {
                names.push(s.next().expect("scale per column").name.clone());
            } else {
                let cat = c.next().expect("map per column");
                names.extend(cat.levels.iter().map(|l| format!("{}={}", cat.name, l)));
            }
        }
        names
    }

    /// Encodes rows; categories unseen during fitting map to all zeros.
    pub fn transform(&self, rows: &[AdultRow]) -> Result<Dataset> {
        let width = self.width();
        let mut features = Vec::with_capacity(rows.len() * width);
        for r in rows {
            let (mut s, mut c, mut num) = (self.scales.iter(), self.categories.iter(), 0);
            for (j, cont) in ADULT_CONTINUOUS.iter().enumerate() {
                if *cont {
                    let sc = s.next().expect("scale per column");
                    features.push((r.numbers[num] - sc.mean) / sc.scale);
                    num += 1;
                } else {
                    let cat = c.next().expect("map per column");
                    features.extend(cat.levels.iter().map(|l| f64::from(u8::from(*l == r.fields[j]))));
                }
            }
        }
        let labels = rows.iter().map(|r| f64::from(u8::from(r.high_income))).collect();
        let mut ds = Dataset::new(width, features, labels)?;
        ds.feature_names = self.feature_names();
        ds.preprocessing = Preprocessing {
            source: "adult".into(),
            scales: self.scales.clone(),
            categories: self.categories.clone(),
            true_theta: None,
        };
        Ok(ds)
    }
}

/// Loads one Adult file, fitting the encoder on it.
pub fn load_adult(path: impl AsRef<Path>) -> Result<Dataset> {
    let rows = parse_adult(BufReader::new(File::open(path)?))?;
    AdultEncoder::fit(&rows)?.transform(&rows)
}

/// Train/test pair for Adult. With a test file the published split is
/// used; otherwise the training file is split 2:1 with a seeded shuffle.
/// The encoder is always fitted on the training part only.
pub fn load_adult_split(
    train: impl AsRef<Path>,
    test: Option<&Path>,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let mut train_rows = parse_adult(BufReader::new(File::open(train)?))?;
    let test_rows = match test {
        Some(p) => parse_adult(BufReader::new(File::open(p)?))?,
        None => {
            let mut idx: Vec<usize> = (0..train_rows.len()).collect();
            idx.shuffle(&mut rng::stream(seed, Purpose::Split));
            let cut = (2 * idx.len()).div_ceil(3);
            let (tr, te) = idx.split_at(cut);
            let test_rows = te.iter().map(|&i| train_rows[i].clone()).collect();
            train_rows = tr.iter().map(|&i| train_rows[i].clone()).collect();
            test_rows
        }
    };
    let enc = AdultEncoder::fit(&train_rows)?;
    Ok((enc.transform(&train_rows)?, enc.transform(&test_rows)?))
}

fn unit_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn logistic_data(n: usize, d: usize, seed: u64, label: impl Fn(f64, f64) -> bool) -> Dataset {
    let mut rng = rng::stream(seed, Purpose::Data);
    let theta = unit_vector(d, &mut rng);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        features.extend((0..d).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)));
        let z: f64 = features[start..].iter().zip(&theta).map(|(x, t)| x * t).sum();
        let u: f64 = rng.random();
        labels.push(f64::from(u8::from(label(z, u))));
    }
    let mut ds = Dataset::new(d, features, labels).expect("finite synthetic data");
    ds.preprocessing.source = "synthetic logistic".into();
    ds.preprocessing.true_theta = Some(theta);
    ds
}

/// `theta*` uniform on the unit sphere, `x ~ Normal(0, I_d)`,
/// `y ~ Bernoulli(sigmoid(theta* . x))`.
pub fn synthetic_logistic(n: usize, d: usize, seed: u64) -> Dataset {
    logistic_data(n, d, seed, |z, u| u < crate::models::sigmoid(z))
}

/// As [`synthetic_logistic`] but with noiseless labels `1[theta* . x >= 0]`.
pub fn synthetic_separable(n: usize, d: usize, seed: u64) -> Dataset {
    logistic_data(n, d, seed, |z, _| z >= 0.0)
}

/// `n` scalar observations `Normal(mean, sd^2)` stored as labels.
pub fn synthetic_gaussian(n: usize, mean: f64, sd: f64, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, Purpose::Data);
    let labels = (0..n)
        .map(|_| mean + sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut ds = Dataset::new(0, Vec::new(), labels).expect("finite synthetic data");
    ds.preprocessing.source = "synthetic gaussian".into();
    ds.preprocessing.true_theta = Some(vec![mean]);
    ds
}

/// How minibatches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each record independently with probability `q`.
    Poisson { q: f64 },
    /// Uniform subset of exactly `tau` records.
    FixedSize { tau: usize },
}

/// Draws a sorted index set into `out` (cleared first).
pub fn draw_minibatch<R: Rng>(n: usize, mode: SamplingMode, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    match mode {
        SamplingMode::Poisson { q } if q >= 1.0 => out.extend(0..n),
        SamplingMode::Poisson { q } if q <= 0.0 => {}
        SamplingMode::Poisson { q } => {
            // Geometric gaps between successive inclusions.
            let log_miss = (-q).ln_1p();
            let mut i = 0usize;
            loop {
                let u: f64 = 1.0 - rng.random::<f64>();
                let gap = (u.ln() / log_miss).floor();
                if gap >= (n - i) as f64 {
                    break;
                }
                i += gap as usize;
                out.push(i);
                i += 1;
                if i >= n {
                    break;
                }
            }
        }
        SamplingMode::FixedSize { tau } => {
            out.extend(rand::seq::index::sample(rng, n, tau.min(n)));
            out.sort_unstable();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K
50, ?, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, 13, United-States, <=50K
38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, White, Female, 0, 0, 40, Cuba, >50K.
";

    #[test]
    fn adult_fixture_drops_missing_rows() {
        let rows = parse_adult(FIXTURE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        let ds = AdultEncoder::fit(&rows).unwrap().transform(&rows).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), &[0.0, 1.0]);
        // 6 continuous, relationship and race single-level, the rest two-level
        assert_eq!(ds.width(), 6 + 2 * 6 + 2);
        assert_eq!(ds.row(0)[0], (39.0 - 38.5) / 0.5);
        assert_eq!(ds.feature_names[1], "workclass=State-gov");
    }

    #[test]
    fn adult_errors() {
        let short = "39, State-gov, 77516\n";
        assert!(matches!(parse_adult(short.as_bytes()), Err(Error::Schema { line: 1, .. })));
        let bad = FIXTURE.replacen("77516", "7x", 1);
        assert!(matches!(parse_adult(bad.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn canonical_csv_round_trip() {
        let ds = synthetic_logistic(50, 3, 11);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn synthetic_examples() {
        let empty = synthetic_logistic(0, 4, 1);
        assert!(empty.is_empty());
        assert_eq!(empty.width(), 4);
        assert_eq!(synthetic_logistic(30, 2, 5), synthetic_logistic(30, 2, 5));
        let theta = synthetic_logistic(1, 5, 9).preprocessing.true_theta.unwrap();
        assert!((theta.iter().map(|t| t * t).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minibatch_edge_cases() {
        let mut r = rng::stream(1, Purpose::Batch);
        let mut out = Vec::new();
        draw_minibatch(10, SamplingMode::Poisson { q: 1.0 }, &mut r, &mut out);
        assert_eq!(out, (0..10).collect::<Vec<_>>());
        draw_minibatch(10, SamplingMode::Poisson { q: 0.0 }, &mut r, &mut out);
        assert!(out.is_empty());
        draw_minibatch(10, SamplingMode::FixedSize { tau: 4 }, &mut r, &mut out);
        assert_eq!(out.len(), 4);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
    }
}
