//! Datasets: CSV ingestion, standardization and the synthetic toy set.
//!
//! Ground-truth labels live on [`Dataset`] for the oracle and for evaluation
//! only. Learners receive the feature matrix (and, in sessions, labels that
//! arrive one at a time through an analyst).

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GladError, Result};
use crate::rng;

/// Positive-fraction threshold above which loading emits a warning.
pub const HIGH_ANOMALY_FRACTION: f64 = 0.25;

/// Analyst label. Serialized as the integers `+1` / `-1`; also accepts the
/// strings `"anomaly"` / `"nominal"` when deserializing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Anomaly,
    Nominal,
}

impl Label {
    /// `+1.0` for anomalies, `-1.0` for nominals.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Anomaly => 1.0,
            Label::Nominal => -1.0,
        }
    }

    pub fn is_anomaly(self) -> bool {
        matches!(self, Label::Anomaly)
    }

    pub fn from_sign(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Anomaly),
            -1 => Some(Label::Nominal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Anomaly => "anomaly",
            Label::Nominal => "nominal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign() as i8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        let raw = Raw::deserialize(d)?;
        let parsed = match &raw {
            Raw::Int(v) => Label::from_sign(*v),
            Raw::Text(s) => match s.as_str() {
                "anomaly" | "+1" | "1" => Some(Label::Anomaly),
                "nominal" | "-1" => Some(Label::Nominal),
                _ => None,
            },
        };
        parsed.ok_or_else(|| serde::de::Error::custom("label must be +1/-1 or anomaly/nominal"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    /// n × d row-major feature matrix.
    pub features: Array2<f64>,
    /// Hidden ground truth.
    pub labels: Vec<Label>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n < 2 || d == 0 {
            return Err(GladError::EmptyDataset);
        }
        if labels.len() != n {
            return Err(GladError::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if feature_names.len() != d {
            return Err(GladError::DimensionMismatch {
                expected: d,
                got: feature_names.len(),
            });
        }
        if let Some(((row, col), value)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(GladError::NonNumeric {
                row,
                column: feature_names[col].clone(),
                value: value.to_string(),
            });
        }
        Ok(Self {
            name: name.into(),
            feature_names,
            features,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels.iter().filter(|l| l.is_anomaly()).count()
    }

    pub fn anomaly_fraction(&self) -> f64 {
        self.n_anomalies() as f64 / self.n() as f64
    }
}

/// How label-column values map onto [`Label`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    pub anomaly_values: Vec<String>,
    pub nominal_values: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "label".to_string(),
            anomaly_values: vec!["anomaly".into(), "1".into()],
            nominal_values: vec!["nominal".into(), "0".into()],
        }
    }
}

impl CsvOptions {
    pub fn with_label_column(mut self, column: impl Into<String>) -> Self {
        self.label_column = column.into();
        self
    }
}

/// Load a headered CSV. Every column except the label column becomes a
/// feature, in file order.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| GladError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    read_csv(file, &name, opts)
}

pub fn read_csv<R: std::io::Read>(reader: R, name: &str, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == &opts.label_column)
        .ok_or_else(|| GladError::MissingLabelColumn(opts.label_column.clone()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(GladError::EmptyDataset);
    }

    let d = feature_names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let label = if opts.anomaly_values.iter().any(|v| v == cell) {
                    Label::Anomaly
                } else if opts.nominal_values.iter().any(|v| v == cell) {
                    Label::Nominal
                } else {
                    return Err(GladError::UnknownLabel {
                        row,
                        value: cell.to_string(),
                    });
                };
                labels.push(label);
            } else {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| GladError::NonNumeric {
                        row,
                        column: header[col].clone(),
                        value: cell.to_string(),
                    })?;
                values.push(v);
            }
        }
    }
    let n = labels.len();
    if n < 2 {
        return Err(GladError::EmptyDataset);
    }
    let features = Array2::from_shape_vec((n, d), values).map_err(|_| GladError::EmptyDataset)?;
    let ds = Dataset::new(name, feature_names, features, labels)?;
    let frac = ds.anomaly_fraction();
    tracing::info!(dataset = %ds.name, n = ds.n(), d = ds.d(), anomalies = ds.n_anomalies(), "loaded dataset");
    if frac > HIGH_ANOMALY_FRACTION {
        tracing::warn!(
            dataset = %ds.name,
            fraction = frac,
            "anomaly fraction is unusually high for anomaly detection"
        );
    }
    Ok(ds)
}

/// Write a dataset in the loader's schema: features in order, then a
/// `label` column with `anomaly` / `nominal` values.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = ds.feature_names.clone();
    header.push("label".to_string());
    wtr.write_record(&header)?;
    for (row, label) in ds.features.rows().into_iter().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.as_str().to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| GladError::io("<csv writer>", e))?;
    Ok(())
}

/// Per-feature affine map to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Always > 0; zero-variance columns record 1.
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-12;

impl StandardizationStats {
    pub fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows() as f64;
        let mean: Array1<f64> = features.sum_axis(Axis(0)) / n;
        let std = features
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &mu)| {
                let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > MIN_STD {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = features.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.std[j])
            .collect()
    }

    pub fn invert_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| v * self.std[j] + self.mean[j])
            .collect()
    }

    pub fn invert(&self, standardized: &Array2<f64>) -> Array2<f64> {
        let mut out = standardized.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        out
    }

    /// Map a single standardized coordinate of feature `j` back to raw units.
    pub fn invert_value(&self, j: usize, z: f64) -> f64 {
        z * self.std[j] + self.mean[j]
    }
}

/// Standardize every feature. Labels pass through untouched.
pub fn standardize(ds: &Dataset) -> (Dataset, StandardizationStats) {
    let stats = StandardizationStats::fit(&ds.features);
    let out = Dataset {
        name: ds.name.clone(),
        feature_names: ds.feature_names.clone(),
        features: stats.apply(&ds.features),
        labels: ds.labels.clone(),
    };
    (out, stats)
}

/// Parameters of the 2-D toy generator.
pub mod toy {
    /// Nominal mixture component means; both components have identity covariance.
    pub const MEANS: [[f64; 2]; 2] = [[2.0, 2.0], [7.0, 7.0]];
    /// Anomalies are drawn uniformly from this square.
    pub const BOX: (f64, f64) = (-2.0, 11.0);
    /// Minimum Mahalanobis distance from every component mean.
    pub const MIN_ANOMALY_DISTANCE: f64 = 3.0;
}

/// Two Gaussian nominal clusters plus uniformly scattered outliers, with
/// nominals first and anomalies last.
pub fn make_toy(seed: u64, n_nominal: usize, n_anomaly: usize) -> Result<Dataset> {
    if n_nominal < 10 || n_anomaly < 1 {
        return Err(GladError::InvalidConfig(
            "toy data needs at least 10 nominals and 1 anomaly".into(),
        ));
    }
    let mut rng = rng::rng_for(seed, 0x70_79, 0);
    let n = n_nominal + n_anomaly;
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);

    for i in 0..n_nominal {
        let c = if rng.random_bool(0.5) { 0 } else { 1 };
        for j in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[[i, j]] = toy::MEANS[c][j] + z;
        }
        labels.push(Label::Nominal);
    }
    let (lo, hi) = toy::BOX;
    for i in n_nominal..n {
        loop {
            let p = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
            if toy_min_distance(p) >= toy::MIN_ANOMALY_DISTANCE {
                features[[i, 0]] = p[0];
                features[[i, 1]] = p[1];
                break;
            }
        }
        labels.push(Label::Anomaly);
    }
    Dataset::new("toy", vec!["x".into(), "y".into()], features, labels)
}

/// Distance (Mahalanobis under identity covariance) to the nearest toy component mean.
pub fn toy_min_distance(p: [f64; 2]) -> f64 {
    toy::MEANS
        .iter()
        .map(|m| ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn two_point_column_standardizes_to_unit() {
        let ds = Dataset::new(
            "t",
            vec!["a".into()],
            array![[1.0], [3.0]],
            vec![Label::Nominal, Label::Anomaly],
        )
        .unwrap();
        let (out, stats) = standardize(&ds);
        assert_eq!(out.features, array![[-1.0], [1.0]]);
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
        assert_eq!(out.labels, ds.labels);
    }

    #[test]
    fn constant_column_is_centered_with_unit_divisor() {
        let ds = Dataset::new(
            "t",
            vec!["a".into()],
            array![[5.0], [5.0], [5.0]],
            vec![Label::Nominal; 3],
        )
        .unwrap();
        let (out, stats) = standardize(&ds);
        assert_eq!(out.features, array![[0.0], [0.0], [0.0]]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn random_matrix_moments_after_standardize() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((100, 4), |(_, j)| {
            rng.random_range(-5.0..5.0) * (j as f64 + 1.0) + 10.0
        });
        let ds = Dataset::new(
            "r",
            (0..4).map(|j| format!("f{j}")).collect(),
            x.clone(),
            vec![Label::Nominal; 100],
        )
        .unwrap();
        let (out, stats) = standardize(&ds);
        for col in out.features.axis_iter(Axis(1)) {
            let mean = col.sum() / 100.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-9);
            assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-9);
        }
        let back = stats.invert(&out.features);
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        // Re-standardizing is identity-like.
        let (again, _) = standardize(&out);
        for (a, b) in again.features.iter().zip(out.features.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_and_minimal_file() {
        let text = "f1,label,f2\n1.5,anomaly,2\n-3,nominal,4e1\n";
        let ds = read_csv(text.as_bytes(), "mini", &CsvOptions::default()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.feature_names, vec!["f1", "f2"]);
        assert_eq!(ds.features, array![[1.5, 2.0], [-3.0, 40.0]]);
        assert_eq!(ds.labels, vec![Label::Anomaly, Label::Nominal]);
        assert_eq!(ds.anomaly_fraction(), 0.5);

        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "mini", &CsvOptions::default()).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn csv_accepts_numeric_labels_and_custom_column() {
        let text = "a,b,y\n1,2,1\n3,4,0\n5,6,0\n";
        let opts = CsvOptions::default().with_label_column("y");
        let ds = read_csv(text.as_bytes(), "n", &opts).unwrap();
        assert_eq!(ds.n_anomalies(), 1);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn csv_errors() {
        let opts = CsvOptions::default();
        assert!(matches!(
            read_csv("a,label\nx,anomaly\n1,nominal\n".as_bytes(), "e", &opts),
            Err(GladError::NonNumeric { row: 0, .. })
        ));
        assert!(matches!(
            read_csv("a,label\n1,weird\n2,nominal\n".as_bytes(), "e", &opts),
            Err(GladError::UnknownLabel { .. })
        ));
        assert!(matches!(
            read_csv("a,label\n".as_bytes(), "e", &opts),
            Err(GladError::EmptyDataset)
        ));
        assert!(matches!(
            read_csv("a,b\n1,2\n".as_bytes(), "e", &opts),
            Err(GladError::MissingLabelColumn(_))
        ));
        assert!(matches!(
            read_csv("a,label\n,anomaly\n1,nominal\n".as_bytes(), "e", &opts),
            Err(GladError::NonNumeric { .. })
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", &opts),
            Err(GladError::Io { .. })
        ));
    }

    #[test]
    fn toy_is_deterministic_and_well_separated() {
        let a = make_toy(42, 500, 15).unwrap();
        let b = make_toy(42, 500, 15).unwrap();
        assert_eq!(a.n(), 515);
        assert_eq!(a.d(), 2);
        assert_eq!(a.n_anomalies(), 15);
        let bits = |ds: &Dataset| ds.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        let c = make_toy(43, 500, 15).unwrap();
        assert_ne!(a.features, c.features);

        for (row, label) in a.features.rows().into_iter().zip(&a.labels) {
            if label.is_anomaly() {
                // Independent recomputation from the generator's parameters.
                let d0 = ((row[0] - 2.0).powi(2) + (row[1] - 2.0).powi(2)).sqrt();
                let d1 = ((row[0] - 7.0).powi(2) + (row[1] - 7.0).powi(2)).sqrt();
                assert!(d0.min(d1) >= 3.0);
            }
        }
        assert!(a.labels[..500].iter().all(|l| !l.is_anomaly()));
        assert!(a.labels[500..].iter().all(|l| l.is_anomaly()));
    }

    #[test]
    fn toy_rejects_tiny_inputs() {
        assert!(make_toy(0, 5, 1).is_err());
        assert!(make_toy(0, 20, 0).is_err());
    }

    #[test]
    fn label_serde_forms() {
        assert_eq!(serde_json::to_string(&Label::Anomaly).unwrap(), "1");
        assert_eq!(serde_json::to_string(&Label::Nominal).unwrap(), "-1");
        let l: Label = serde_json::from_str("\"nominal\"").unwrap();
        assert_eq!(l, Label::Nominal);
        let l: Label = serde_json::from_str("1").unwrap();
        assert_eq!(l, Label::Anomaly);
        assert!(serde_json::from_str::<Label>("0").is_err());
    }
}
