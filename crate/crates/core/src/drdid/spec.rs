use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Covariate, Outcome};
use crate::quarter::{Quarter, Window};

/// Everything that determines one event study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationSpec {
    pub product: String,
    pub outcome: Outcome,
    pub reference: Quarter,
    pub excluded: Vec<Quarter>,
    pub windows: Vec<Window>,
    pub conditional: bool,
    pub covariates: Vec<Covariate>,
    /// Overrides `covariates` for the propensity model only.
    #[serde(default)]
    pub propensity_covariates: Option<Vec<Covariate>>,
    /// Overrides `covariates` for the outcome regressions only.
    #[serde(default)]
    pub outcome_covariates: Option<Vec<Covariate>>,
    pub bootstrap_reps: usize,
    pub level: f64,
    pub seed: u64,
}

impl EstimationSpec {
    /// Reference 2011Q1, 2011Q2 and 2011Q3 left out, tax and post windows,
    /// all six covariates, 1000 bootstrap draws at the 95% level.
    pub fn new(product: impl Into<String>, outcome: Outcome) -> EstimationSpec {
        EstimationSpec {
            product: product.into(),
            outcome,
            reference: Quarter::new(2011, 1).expect("valid"),
            excluded: vec![Quarter::new(2011, 2).expect("valid"), Quarter::new(2011, 3).expect("valid")],
            windows: vec![Window::tax(), Window::post()],
            conditional: true,
            covariates: Covariate::ALL.to_vec(),
            propensity_covariates: None,
            outcome_covariates: None,
            bootstrap_reps: 1000,
            level: 0.95,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reference >= Quarter::TAX_START {
            return Err(Error::InvalidConfig(format!(
                "reference quarter {} must precede the tax start {}",
                self.reference,
                Quarter::TAX_START
            )));
        }
        if self.excluded.contains(&self.reference) {
            return Err(Error::InvalidConfig(format!("reference quarter {} is excluded", self.reference)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        for w in &self.windows {
            if w.quarters.is_empty() {
                return Err(Error::InvalidConfig(format!("window {} is empty", w.name)));
            }
            if let Some(q) = w.quarters.iter().find(|q| self.excluded.contains(q) || **q == self.reference) {
                return Err(Error::InvalidConfig(format!(
                    "window {} contains {q}, which is excluded or the reference",
                    w.name
                )));
            }
        }
        if self.conditional && self.covariates.is_empty() {
            log::debug!("conditional estimation without covariates reduces to the unconditional estimator");
        }
        Ok(())
    }

    pub fn propensity_set(&self) -> &[Covariate] {
        self.propensity_covariates.as_deref().unwrap_or(&self.covariates)
    }

    pub fn outcome_set(&self) -> &[Covariate] {
        self.outcome_covariates.as_deref().unwrap_or(&self.covariates)
    }

    /// Every covariate either model needs.
    pub fn required_covariates(&self) -> Vec<Covariate> {
        let mut all: Vec<Covariate> = self.propensity_set().iter().chain(self.outcome_set()).copied().collect();
        all.sort();
        all.dedup();
        all
    }

    /// Quarters of `grid` that receive a point estimate.
    pub fn point_quarters(&self, grid: &[Quarter]) -> Vec<Quarter> {
        grid.iter().copied().filter(|q| *q != self.reference && !self.excluded.contains(q)).collect()
    }
}
