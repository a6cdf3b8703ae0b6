//! Text serialization of matrices, regression data and estimates.
//!
//! Matrices go to CSV (header `col0,col1,...`, one row per line) or to a JSON
//! bundle where each matrix is `{"rows", "cols", "data"}` with `data` in
//! row-major order. CSV values are written with 17 significant digits and
//! JSON values in shortest round-trip form, so both reload bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::matspec::RealMatrix;
use crate::varx_sim::RegressionData;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &RealMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..m.ncols()).map(|j| format!("col{j}")))
        .map_err(csv_err)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| fmt_f64(m[(i, j)])))
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn matrix_from_csv(text: &str) -> Result<RealMatrix> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = r.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("not a number: {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(RealMatrix::from_row_slice(rows, cols, &data))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_matrix_csv(path: &Path, m: &RealMatrix) -> Result<()> {
    fs::write(path, matrix_to_csv(m)?)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<RealMatrix> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

/// JSON form of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&RealMatrix> for MatrixJson {
    fn from(m: &RealMatrix) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<MatrixJson> for RealMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.data.len() != j.rows * j.cols {
            return Err(Error::Format(format!(
                "matrix declares {}×{} but holds {} values",
                j.rows,
                j.cols,
                j.data.len()
            )));
        }
        Ok(RealMatrix::from_row_slice(j.rows, j.cols, &j.data))
    }
}

#[derive(Serialize, Deserialize)]
struct DataBundle {
    x: MatrixJson,
    z: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<MatrixJson>,
}

pub fn data_to_json(data: &RegressionData) -> Result<String> {
    let bundle = DataBundle {
        x: (&data.x).into(),
        z: (&data.z).into(),
        w: data.w.as_ref().map(Into::into),
        sigma: data.sigma.as_ref().map(Into::into),
    };
    Ok(serde_json::to_string(&bundle)?)
}

pub fn data_from_json(text: &str) -> Result<RegressionData> {
    let b: DataBundle = serde_json::from_str(text)?;
    let data = RegressionData {
        x: b.x.try_into()?,
        z: b.z.try_into()?,
        w: b.w.map(TryInto::try_into).transpose()?,
        sigma: b.sigma.map(TryInto::try_into).transpose()?,
    };
    data.validate()?;
    Ok(data)
}

/// Writes `X.csv`, `Z.csv` and, when present, `W.csv` and `Sigma.csv` into
/// `dir`.
pub fn write_data_csv(dir: &Path, data: &RegressionData) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("X.csv"), &data.x)?;
    write_matrix_csv(&dir.join("Z.csv"), &data.z)?;
    if let Some(w) = &data.w {
        write_matrix_csv(&dir.join("W.csv"), w)?;
    }
    if let Some(s) = &data.sigma {
        write_matrix_csv(&dir.join("Sigma.csv"), s)?;
    }
    Ok(())
}

pub fn read_data_csv(dir: &Path) -> Result<RegressionData> {
    let optional = |name: &str| -> Result<Option<RealMatrix>> {
        let p = dir.join(name);
        if p.exists() {
            read_matrix_csv(&p).map(Some)
        } else {
            Ok(None)
        }
    };
    let data = RegressionData {
        x: read_matrix_csv(&dir.join("X.csv"))?,
        z: read_matrix_csv(&dir.join("Z.csv"))?,
        w: optional("W.csv")?,
        sigma: optional("Sigma.csv")?,
    };
    data.validate()?;
    Ok(data)
}

#[derive(Serialize, Deserialize)]
struct EstimateBundle {
    theta_hat: MatrixJson,
    lambda_used: f64,
    iters: usize,
    converged: bool,
    kkt_residual: f64,
    objective: f64,
    #[serde(default)]
    rank_deficient: bool,
}

pub fn estimate_to_json(est: &Estimate) -> Result<String> {
    let bundle = EstimateBundle {
        theta_hat: (&est.theta_hat).into(),
        lambda_used: est.lambda_used,
        iters: est.iters,
        converged: est.converged,
        kkt_residual: est.kkt_residual,
        objective: est.objective,
        rank_deficient: est.rank_deficient,
    };
    Ok(serde_json::to_string(&bundle)?)
}

pub fn estimate_from_json(text: &str) -> Result<Estimate> {
    let b: EstimateBundle = serde_json::from_str(text)?;
    Ok(Estimate {
        theta_hat: b.theta_hat.try_into()?,
        lambda_used: b.lambda_used,
        iters: b.iters,
        converged: b.converged,
        kkt_residual: b.kkt_residual,
        objective: b.objective,
        rank_deficient: b.rank_deficient,
    })
}

/// Two-column whitespace-delimited data for plotting.
pub fn two_column(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(x, y)| format!("{} {}\n", fmt_f64(*x), fmt_f64(*y)))
        .collect()
}
