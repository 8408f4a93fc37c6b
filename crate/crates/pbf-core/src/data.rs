//! Core domain types: replicated datasets, model specifications, parameter
//! vectors and cross-validation reports.
//!
//! A [`ReplicatedDataset`] couples an n x p covariate matrix with an n x m
//! response matrix; m = 1 degenerates to the usual single-response setting.
//! All types are immutable after construction and safe to share across
//! threads.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("NonFiniteInput: {0}")]
    NonFiniteInput(String),
    #[error("ReplicateCountTooSmall: row summaries need m >= 2, dataset has m = {0}")]
    ReplicateCountTooSmall(usize),
    #[error("IndexOutOfRange: {0}")]
    IndexOutOfRange(String),
    #[error("InvalidModel: {0}")]
    InvalidModel(String),
    #[error("CsvParse: {0}")]
    CsvParse(String),
    #[error("NonFiniteReport: fold {0} produced a non-finite log density")]
    NonFiniteReport(usize),
}

/// Covariates plus replicated responses.
///
/// Rows index observations (or time points for autoregressive models),
/// covariate columns index predictors, response columns index replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedDataset {
    covariates: DMatrix<f64>,
    responses: DMatrix<f64>,
    names: Vec<String>,
}

impl ReplicatedDataset {
    /// Validates and builds a dataset. Requires n >= 2, m >= 1, p >= 1,
    /// matching row counts and finite entries. Responses are stored as
    /// reals even for count families; count validation happens at
    /// likelihood-evaluation time.
    pub fn new(
        covariates: DMatrix<f64>,
        responses: DMatrix<f64>,
        names: Vec<String>,
    ) -> Result<Self, DataError> {
        if covariates.nrows() != responses.nrows() {
            return Err(DataError::DimensionMismatch(format!(
                "{} covariate rows vs {} response rows",
                covariates.nrows(),
                responses.nrows()
            )));
        }
        if covariates.nrows() < 2 {
            return Err(DataError::DimensionMismatch(format!(
                "need at least 2 rows, got {}",
                covariates.nrows()
            )));
        }
        if covariates.ncols() < 1 || responses.ncols() < 1 {
            return Err(DataError::DimensionMismatch(
                "need p >= 1 covariate columns and m >= 1 response columns".into(),
            ));
        }
        if names.len() != covariates.ncols() {
            return Err(DataError::DimensionMismatch(format!(
                "{} names for {} covariate columns",
                names.len(),
                covariates.ncols()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteInput("covariate matrix".into()));
        }
        if responses.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteInput("response matrix".into()));
        }
        Ok(Self { covariates, responses, names })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn m(&self) -> usize {
        self.responses.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn responses(&self) -> &DMatrix<f64> {
        &self.responses
    }

    pub fn covariate(&self, row: usize, col: usize) -> f64 {
        self.covariates[(row, col)]
    }

    pub fn covariate_row(&self, row: usize) -> Vec<f64> {
        self.covariates.row(row).iter().copied().collect()
    }

    pub fn response(&self, row: usize, replicate: usize) -> f64 {
        self.responses[(row, replicate)]
    }

    /// Sample mean and sample standard deviation of row i's replicates.
    /// The variance divisor is m - 1, so m >= 2 is required.
    pub fn row_summary(&self, i: usize) -> Result<(f64, f64), DataError> {
        if i >= self.n() {
            return Err(DataError::IndexOutOfRange(format!(
                "row {} of {}",
                i,
                self.n()
            )));
        }
        let m = self.m();
        if m < 2 {
            return Err(DataError::ReplicateCountTooSmall(m));
        }
        let row = self.responses.row(i);
        let mean = row.iter().sum::<f64>() / m as f64;
        let ss = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>();
        Ok((mean, (ss / (m as f64 - 1.0)).sqrt()))
    }

    /// CSV serialization: one header row (covariate names then y1..ym),
    /// then one record per observation with the p covariates followed by
    /// the m responses. Values print in Rust's shortest round-trip form,
    /// so parse(serialize(ds)) is bit-exact.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self.names.clone();
        for j in 0..self.m() {
            header.push(format!("y{}", j + 1));
        }
        wtr.write_record(&header).expect("in-memory csv write");
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(self.p() + self.m());
            for c in 0..self.p() {
                rec.push(format!("{}", self.covariates[(i, c)]));
            }
            for j in 0..self.m() {
                rec.push(format!("{}", self.responses[(i, j)]));
            }
            wtr.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory csv flush"))
            .expect("csv output is utf-8")
    }

    /// Parses the format written by [`Self::to_csv`]. The caller states how
    /// many leading columns are covariates.
    pub fn from_csv(text: &str, p: usize) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| DataError::CsvParse(e.to_string()))?
            .clone();
        if header.len() <= p {
            return Err(DataError::CsvParse(format!(
                "{} columns cannot hold {} covariates plus responses",
                header.len(),
                p
            )));
        }
        let names: Vec<String> = header.iter().take(p).map(|s| s.to_string()).collect();
        let m = header.len() - p;
        let mut cov = Vec::new();
        let mut resp = Vec::new();
        let mut n = 0usize;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| DataError::CsvParse(e.to_string()))?;
            if rec.len() != p + m {
                return Err(DataError::CsvParse(format!(
                    "record {} has {} fields, expected {}",
                    n,
                    rec.len(),
                    p + m
                )));
            }
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|e| DataError::CsvParse(format!("record {n}: {e}")))?;
                if k < p {
                    cov.push(v);
                } else {
                    resp.push(v);
                }
            }
            n += 1;
        }
        Self::new(
            DMatrix::from_row_slice(n, p, &cov),
            DMatrix::from_row_slice(n, m, &resp),
            names,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Poisson,
    Geometric,
    GaussianNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkFn {
    Log,
    Logit,
    Probit,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionForm {
    Linear,
    Quadratic,
    Gp,
    Ar1,
    FixedFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelRole {
    Candidate,
    Truth,
}

/// Known regression function for truth models, eta0 in the rate formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruthFn {
    /// Coefficients in increasing degree: c0 + c1 x + c2 x^2 + ...
    Polynomial(Vec<f64>),
}

impl TruthFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TruthFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ck| acc * x + ck),
        }
    }
}

/// Named parameter slots. `Slope(k)` is the k-th regression coefficient in
/// the model's own design ordering: one per selected covariate for linear,
/// GP and AR(1) forms, and (x, x^2) for the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Intercept,
    Slope(usize),
    Rho,
    /// omega = log sigma^2, so the variance stays positive under
    /// unconstrained sampling.
    LogVariance,
    /// Latent GP regression value at design row i.
    Latent(usize),
}

/// Flat parameter vector with a named layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    values: Vec<f64>,
    layout: Vec<Slot>,
}

impl ThetaVector {
    pub fn new(values: Vec<f64>, layout: Vec<Slot>) -> Result<Self, DataError> {
        if values.len() != layout.len() {
            return Err(DataError::DimensionMismatch(format!(
                "{} values for {} slots",
                values.len(),
                layout.len()
            )));
        }
        for (k, slot) in layout.iter().enumerate() {
            if layout[k + 1..].contains(slot) {
                return Err(DataError::InvalidModel(format!(
                    "duplicate slot {slot:?} in layout"
                )));
            }
        }
        Ok(Self { values, layout })
    }

    pub fn empty() -> Self {
        Self { values: Vec::new(), layout: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    /// Same layout, new values. Used by samplers to map flat draws back
    /// into named parameters.
    pub fn with_values(&self, values: &[f64]) -> Result<Self, DataError> {
        Self::new(values.to_vec(), self.layout.clone())
    }

    pub fn get(&self, slot: Slot) -> Option<f64> {
        self.layout
            .iter()
            .position(|s| *s == slot)
            .map(|k| self.values[k])
    }

    pub fn intercept(&self) -> f64 {
        self.get(Slot::Intercept).unwrap_or(0.0)
    }

    pub fn slope(&self, k: usize) -> Option<f64> {
        self.get(Slot::Slope(k))
    }

    pub fn rho(&self) -> Option<f64> {
        self.get(Slot::Rho)
    }

    pub fn omega(&self) -> Option<f64> {
        self.get(Slot::LogVariance)
    }

    /// sigma^2 = exp(omega); positive whenever omega is finite.
    pub fn sigma2(&self) -> Option<f64> {
        self.omega().map(f64::exp)
    }

    pub fn latent(&self, row: usize) -> Option<f64> {
        self.get(Slot::Latent(row))
    }

    /// Overlay of `fixed` on top of `self`: fixed slots win, slots absent
    /// from `self` are appended. Model evaluation merges the sampler's free
    /// parameters with a spec's pinned ones through this.
    pub fn merged_with(&self, fixed: &ThetaVector) -> ThetaVector {
        let mut values = Vec::new();
        let mut layout = Vec::new();
        for (k, slot) in self.layout.iter().enumerate() {
            layout.push(*slot);
            values.push(fixed.get(*slot).unwrap_or(self.values[k]));
        }
        for (k, slot) in fixed.layout.iter().enumerate() {
            if !layout.contains(slot) {
                layout.push(*slot);
                values.push(fixed.values[k]);
            }
        }
        ThetaVector { values, layout }
    }
}

/// A model's family, link, regression form and covariate subset, with
/// optional pinned parameters and (for truth models) the known regression
/// function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub family: Family,
    pub link: LinkFn,
    pub regression: RegressionForm,
    /// Indices into the dataset's covariate columns.
    pub covariates: Vec<usize>,
    pub role: ModelRole,
    pub truth_fn: Option<TruthFn>,
    pub fixed_params: Option<ThetaVector>,
}

impl ModelSpec {
    pub fn new(
        label: impl Into<String>,
        family: Family,
        link: LinkFn,
        regression: RegressionForm,
        covariates: Vec<usize>,
    ) -> Result<Self, DataError> {
        let spec = Self {
            label: label.into(),
            family,
            link,
            regression,
            covariates,
            role: ModelRole::Candidate,
            truth_fn: None,
            fixed_params: None,
        };
        // The truth function arrives through the builder, so only the
        // shape is checked here; validate() covers the rest at use time.
        spec.validate_shape()?;
        Ok(spec)
    }

    pub fn with_role(mut self, role: ModelRole) -> Self {
        self.role = role;
        self
    }

    pub fn with_truth_fn(mut self, f: TruthFn) -> Result<Self, DataError> {
        self.truth_fn = Some(f);
        self.validate()?;
        Ok(self)
    }

    pub fn with_fixed_params(mut self, theta: ThetaVector) -> Self {
        self.fixed_params = Some(theta);
        self
    }

    /// Family/link compatibility and the FixedFunction requirement.
    pub fn validate(&self) -> Result<(), DataError> {
        self.validate_shape()?;
        if self.regression == RegressionForm::FixedFunction && self.truth_fn.is_none() {
            return Err(DataError::InvalidModel(
                "FixedFunction regression requires a truth function".into(),
            ));
        }
        Ok(())
    }

    fn validate_shape(&self) -> Result<(), DataError> {
        let ok = matches!(
            (self.family, self.link),
            (Family::Poisson, LinkFn::Log)
                | (Family::Geometric, LinkFn::Logit)
                | (Family::Geometric, LinkFn::Probit)
                | (Family::GaussianNoise, LinkFn::Identity)
        );
        if !ok {
            return Err(DataError::InvalidModel(format!(
                "{:?} family is incompatible with {:?} link",
                self.family, self.link
            )));
        }
        if self.covariates.is_empty() && self.regression != RegressionForm::FixedFunction {
            return Err(DataError::InvalidModel(
                "candidate models need at least one covariate".into(),
            ));
        }
        if self.regression == RegressionForm::Quadratic && self.covariates.len() != 1 {
            return Err(DataError::InvalidModel(
                "quadratic regression takes exactly one covariate".into(),
            ));
        }
        Ok(())
    }

    /// True when every parameter the likelihood reads is pinned, so
    /// cross-validation needs no posterior sampling at all. A count-family
    /// fixed-function model has an empty layout and is always free of
    /// parameters.
    pub fn is_parameter_free(&self) -> bool {
        self.nominal_layout(0).iter().all(|slot| {
            self.fixed_params
                .as_ref()
                .is_some_and(|f| f.get(*slot).is_some())
        })
    }

    /// The slots a candidate of this shape exposes, before pinning.
    /// `n_rows` matters only for GP latents.
    pub fn nominal_layout(&self, n_rows: usize) -> Vec<Slot> {
        let mut layout = Vec::new();
        match self.regression {
            RegressionForm::Ar1 => {
                layout.push(Slot::Rho);
                for k in 0..self.covariates.len() {
                    layout.push(Slot::Slope(k));
                }
                layout.push(Slot::LogVariance);
            }
            RegressionForm::Quadratic => {
                layout.push(Slot::Intercept);
                layout.push(Slot::Slope(0));
                layout.push(Slot::Slope(1));
                if self.family == Family::GaussianNoise {
                    layout.push(Slot::LogVariance);
                }
            }
            RegressionForm::Linear => {
                layout.push(Slot::Intercept);
                for k in 0..self.covariates.len() {
                    layout.push(Slot::Slope(k));
                }
                if self.family == Family::GaussianNoise {
                    layout.push(Slot::LogVariance);
                }
            }
            RegressionForm::Gp => {
                layout.push(Slot::Intercept);
                for k in 0..self.covariates.len() {
                    layout.push(Slot::Slope(k));
                }
                for i in 0..n_rows {
                    layout.push(Slot::Latent(i));
                }
                layout.push(Slot::LogVariance);
            }
            RegressionForm::FixedFunction => {
                if self.family == Family::GaussianNoise {
                    layout.push(Slot::LogVariance);
                }
            }
        }
        layout
    }

    /// Nominal slots minus the pinned ones: what a sampler actually moves.
    pub fn free_layout(&self, n_rows: usize) -> Vec<Slot> {
        let nominal = self.nominal_layout(n_rows);
        match &self.fixed_params {
            None => nominal,
            Some(fixed) => nominal
                .into_iter()
                .filter(|slot| fixed.get(*slot).is_none())
                .collect(),
        }
    }

    /// Free parameters merged with the spec's pinned ones.
    pub fn effective_theta(&self, free: &ThetaVector) -> ThetaVector {
        match &self.fixed_params {
            None => free.clone(),
            Some(fixed) => free.merged_with(fixed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvMode {
    Forward,
    Inverse,
}

/// Per-fold log cross-validation densities with Monte Carlo standard
/// errors. `mean_log_density` is the arithmetic mean of the folds, the
/// quantity whose n-large limit the convergence theory describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model_label: String,
    pub mode: CvMode,
    pub held_out_replicate: usize,
    pub per_fold_log_density: Vec<f64>,
    pub mc_std_err: Vec<f64>,
    pub mean_log_density: f64,
}

impl CvReport {
    /// Rejects non-finite folds; a fold that underflowed to -inf must be
    /// surfaced as an estimator error, never averaged.
    pub fn new(
        model_label: impl Into<String>,
        mode: CvMode,
        held_out_replicate: usize,
        per_fold_log_density: Vec<f64>,
        mc_std_err: Vec<f64>,
    ) -> Result<Self, DataError> {
        if per_fold_log_density.len() != mc_std_err.len() {
            return Err(DataError::DimensionMismatch(format!(
                "{} fold densities vs {} standard errors",
                per_fold_log_density.len(),
                mc_std_err.len()
            )));
        }
        if let Some(bad) = per_fold_log_density.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteReport(bad));
        }
        let mean_log_density =
            per_fold_log_density.iter().sum::<f64>() / per_fold_log_density.len() as f64;
        Ok(Self {
            model_label: model_label.into(),
            mode,
            held_out_replicate,
            per_fold_log_density,
            mc_std_err,
            mean_log_density,
        })
    }

    pub fn n_folds(&self) -> usize {
        self.per_fold_log_density.len()
    }
}
