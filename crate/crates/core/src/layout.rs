//! Term layouts and design-matrix construction for bridge models.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::ProxyDataset;
use crate::error::{Error, Result};

/// One regressor column. Indices are zero-based internally and rendered
/// one-based (`X1`, `Z2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    X(usize),
    Z(usize),
    W(usize),
    A,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::X(j) => write!(f, "X{}", j + 1),
            Term::Z(j) => write!(f, "Z{}", j + 1),
            Term::W(j) => write!(f, "W{}", j + 1),
            Term::A => f.write_str("A"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "A" {
            return Ok(Term::A);
        }
        let bad = || Error::InvalidConfig(format!("unrecognized term `{s}`"));
        let (head, idx) = s.split_at(1.min(s.len()));
        let idx: usize = idx.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match head {
            "X" => Ok(Term::X(idx - 1)),
            "Z" => Ok(Term::Z(idx - 1)),
            "W" => Ok(Term::W(idx - 1)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Term {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Which regressor family a design matrix realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignBlock {
    /// Regressors of the outcome bridge, `(1, W, A, X)`; may not use `Z`.
    OutcomeBridge,
    /// Regressors of the treatment bridge, `(1, Z, A, X)`; may not use `W`.
    TreatmentBridge,
    /// Instruments for the outcome-bridge moment, `(1, Z, A, X)`; may not use `W`.
    Instrument,
}

impl fmt::Display for DesignBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DesignBlock::OutcomeBridge => "outcome_bridge",
            DesignBlock::TreatmentBridge => "treatment_bridge",
            DesignBlock::Instrument => "instrument",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermLayout {
    pub intercept: bool,
    pub main_terms: Vec<Term>,
    #[serde(default)]
    pub interactions_with_a: Vec<Term>,
}

impl TermLayout {
    /// `(1, first, [A], X)`.
    pub fn from_parts(first: impl Iterator<Item = Term>, with_a: bool, p_x: usize) -> Self {
        let mut main_terms: Vec<Term> = first.collect();
        if with_a {
            main_terms.push(Term::A);
        }
        main_terms.extend((0..p_x).map(Term::X));
        Self { intercept: true, main_terms, interactions_with_a: Vec::new() }
    }

    /// `(1, W, A, X)`.
    pub fn outcome_bridge(data: &ProxyDataset) -> Self {
        Self::from_parts((0..data.p_w()).map(Term::W), true, data.p_x())
    }

    /// `(1, Z, A, X)`.
    pub fn treatment_bridge(data: &ProxyDataset) -> Self {
        Self::from_parts((0..data.p_z()).map(Term::Z), true, data.p_x())
    }

    /// `(1, Z, A, X)`.
    pub fn instrument(data: &ProxyDataset) -> Self {
        Self::treatment_bridge(data)
    }

    /// `(1, W, X)` for the control-group outcome bridge.
    pub fn att_outcome_bridge(data: &ProxyDataset) -> Self {
        Self::from_parts((0..data.p_w()).map(Term::W), false, data.p_x())
    }

    /// `(1, Z, X)` for the control-group treatment bridge and its instruments.
    pub fn att_treatment_bridge(data: &ProxyDataset) -> Self {
        Self::from_parts((0..data.p_z()).map(Term::Z), false, data.p_x())
    }

    pub fn with_interactions(mut self, terms: Vec<Term>) -> Self {
        self.interactions_with_a = terms;
        self
    }

    /// Number of columns (= coefficient dimension).
    pub fn len(&self) -> usize {
        usize::from(self.intercept) + self.main_terms.len() + self.interactions_with_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when any column depends on the treatment value.
    pub fn uses_treatment(&self) -> bool {
        !self.interactions_with_a.is_empty() || self.main_terms.contains(&Term::A)
    }

    pub fn term_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        if self.intercept {
            out.push("1".to_string());
        }
        out.extend(self.main_terms.iter().map(Term::to_string));
        out.extend(self.interactions_with_a.iter().map(|t| format!("{t}:A")));
        out
    }

    /// Position of the bare `A` main term in the column order, if present.
    pub fn treatment_column(&self) -> Option<usize> {
        self.main_terms
            .iter()
            .position(|t| *t == Term::A)
            .map(|j| j + usize::from(self.intercept))
    }

    /// Rejects out-of-range column references and proxies foreign to `block`.
    pub fn check(&self, data: &ProxyDataset, block: DesignBlock) -> Result<()> {
        for &term in self.main_terms.iter().chain(&self.interactions_with_a) {
            let ok = match term {
                Term::X(j) => j < data.p_x(),
                Term::Z(j) => j < data.p_z() && block != DesignBlock::OutcomeBridge,
                Term::W(j) => j < data.p_w() && block == DesignBlock::OutcomeBridge,
                Term::A => true,
            };
            if !ok {
                return Err(Error::ColumnOutOfRange { term: term.to_string(), block: block.to_string() });
            }
        }
        if self.is_empty() {
            return Err(Error::Dimension(format!("empty layout for block {block}")));
        }
        Ok(())
    }
}

fn term_value(data: &ProxyDataset, i: usize, term: Term, a: f64) -> f64 {
    match term {
        Term::X(j) => data.x()[(i, j)],
        Term::Z(j) => data.z()[(i, j)],
        Term::W(j) => data.w()[(i, j)],
        Term::A => a,
    }
}

/// Design matrix with column order `[intercept, main terms, A-interactions]`.
pub fn build_design(data: &ProxyDataset, layout: &TermLayout, block: DesignBlock) -> Result<DMatrix<f64>> {
    build_design_at(data, layout, block, None)
}

/// As [`build_design`], but with the treatment column forced to `treatment`
/// when given (counterfactual evaluation).
pub fn build_design_at(
    data: &ProxyDataset,
    layout: &TermLayout,
    block: DesignBlock,
    treatment: Option<u8>,
) -> Result<DMatrix<f64>> {
    layout.check(data, block)?;
    let n = data.n();
    let k = layout.len();
    let offset = usize::from(layout.intercept);
    let n_main = layout.main_terms.len();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let a = f64::from(treatment.unwrap_or(data.a()[i]));
        if layout.intercept {
            out[(i, 0)] = 1.0;
        }
        for (j, &term) in layout.main_terms.iter().enumerate() {
            out[(i, offset + j)] = term_value(data, i, term, a);
        }
        for (j, &term) in layout.interactions_with_a.iter().enumerate() {
            out[(i, offset + n_main + j)] = term_value(data, i, term, a) * a;
        }
    }
    Ok(out)
}
