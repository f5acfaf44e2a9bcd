//! Exact identification of counterfactual laws when `U`, `W` and `Z` are
//! categorical.
//!
//! For each stratum `x`, with `M[k][j] = Pr(z_k | w_j, a, x)`,
//!
//! ```text
//! Pr(y(a) | x) = Σ_j [M⁻¹ c]_j / Pr(a | w_j, x),   c_k = Pr(y, a, z_k | x).
//! ```
//!
//! The latent law is kept alongside so the result can be checked against the
//! direct sum `Σ_u Pr(y | u, a, x) Pr(u | x)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Hard ceiling on the condition number of `Pr(Z | W, a, x)`.
pub const COMPLETENESS_CEILING: f64 = 1e10;
/// Tolerance on negativity and normalization of identified probabilities.
pub const IDENTIFICATION_TOL: f64 = 1e-8;
/// Tolerance on a law tensor summing to one.
pub const LAW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawDims {
    pub d_u: usize,
    pub d_x: usize,
    pub d_w: usize,
    pub d_z: usize,
    pub d_y: usize,
}

impl LawDims {
    pub fn new(d_u: usize, d_x: usize, d_w: usize, d_z: usize, d_y: usize) -> Self {
        Self { d_u, d_x, d_w, d_z, d_y }
    }

    /// Same number of categories for `U`, `W` and `Z`.
    pub fn square(d: usize, d_x: usize, d_y: usize) -> Self {
        Self::new(d, d_x, d, d, d_y)
    }

    fn len(&self) -> usize {
        self.d_u * self.observable_len()
    }

    fn observable_len(&self) -> usize {
        self.d_x * self.d_w * self.d_z * 2 * self.d_y
    }
}

fn check_tensor(probs: &[f64], expected: usize) -> Result<()> {
    if probs.len() != expected {
        return Err(Error::InvalidLaw(format!("{} probabilities, expected {expected}", probs.len())));
    }
    if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidLaw(format!("entry {i} is negative or not finite")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > LAW_SUM_TOL.max(probs.len() as f64 * f64::EPSILON) {
        return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
    }
    Ok(())
}

fn check_y_values(y_values: &[f64], d_y: usize) -> Result<()> {
    if y_values.len() != d_y {
        return Err(Error::InvalidLaw(format!("{} outcome values for {d_y} categories", y_values.len())));
    }
    Ok(())
}

/// Joint law of `(U, X, W, Z, A, Y)` with `A ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalLaw {
    dims: LawDims,
    probs: Vec<f64>,
    y_values: Vec<f64>,
}

impl CategoricalLaw {
    /// `probs` in row-major `(u, x, w, z, a, y)` order.
    pub fn new(dims: LawDims, probs: Vec<f64>, y_values: Vec<f64>) -> Result<Self> {
        check_tensor(&probs, dims.len())?;
        check_y_values(&y_values, dims.d_y)?;
        Ok(Self { dims, probs, y_values })
    }

    /// Tabulates `f(u, x, w, z, a, y)` and normalizes it.
    pub fn from_fn(dims: LawDims, y_values: Vec<f64>, f: impl Fn(usize, usize, usize, usize, usize, usize) -> f64) -> Result<Self> {
        let mut probs = Vec::with_capacity(dims.len());
        for u in 0..dims.d_u {
            for x in 0..dims.d_x {
                for w in 0..dims.d_w {
                    for z in 0..dims.d_z {
                        for a in 0..2 {
                            for y in 0..dims.d_y {
                                probs.push(f(u, x, w, z, a, y));
                            }
                        }
                    }
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidLaw(format!("unnormalized mass {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(dims, probs, y_values)
    }

    pub fn dims(&self) -> LawDims {
        self.dims
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_values
    }

    pub fn p(&self, u: usize, x: usize, w: usize, z: usize, a: usize, y: usize) -> f64 {
        let d = &self.dims;
        self.probs[((((u * d.d_x + x) * d.d_w + w) * d.d_z + z) * 2 + a) * d.d_y + y]
    }

    /// Marginal over `U`.
    pub fn observable(&self) -> ObservableLaw {
        let d = self.dims;
        let len = d.observable_len();
        let mut probs = vec![0.0; len];
        for (i, p) in self.probs.iter().enumerate() {
            probs[i % len] += p;
        }
        ObservableLaw { dims: d, probs, y_values: self.y_values.clone() }
    }
}

/// Joint law of `(X, W, Z, A, Y)`; `dims.d_u` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableLaw {
    dims: LawDims,
    probs: Vec<f64>,
    y_values: Vec<f64>,
}

impl ObservableLaw {
    /// `probs` in row-major `(x, w, z, a, y)` order.
    pub fn new(dims: LawDims, probs: Vec<f64>, y_values: Vec<f64>) -> Result<Self> {
        check_tensor(&probs, dims.observable_len())?;
        check_y_values(&y_values, dims.d_y)?;
        Ok(Self { dims, probs, y_values })
    }

    pub fn dims(&self) -> LawDims {
        self.dims
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y_values
    }

    pub fn p(&self, x: usize, w: usize, z: usize, a: usize, y: usize) -> f64 {
        let d = &self.dims;
        self.probs[(((x * d.d_w + w) * d.d_z + z) * 2 + a) * d.d_y + y]
    }

    /// `Pr(X = x)` for every stratum.
    pub fn x_marginal(&self) -> Vec<f64> {
        let per_x = self.dims.observable_len() / self.dims.d_x;
        self.probs.chunks(per_x).map(|c| c.iter().sum()).collect()
    }

    /// `Pr(Z | W, a, x)` with rows indexed by `z` and columns by `w`.
    pub fn z_given_w(&self, a: usize, x: usize) -> Result<DMatrix<f64>> {
        let d = self.dims;
        let mut m = DMatrix::from_fn(d.d_z, d.d_w, |z, w| (0..d.d_y).map(|y| self.p(x, w, z, a, y)).sum());
        for (w, mut col) in m.column_iter_mut().enumerate() {
            let total = col.sum();
            if total <= 0.0 {
                return Err(Error::ZeroCell(format!("Pr(W = {w}, A = {a}, X = {x}) is zero")));
            }
            col /= total;
        }
        Ok(m)
    }
}

/// `Pr(y(a) | x)` indexed `[x][y]`.
pub type CounterfactualLaw = Vec<Vec<f64>>;

/// Identifies `Pr(Y(a) = y | X = x)` from the observable law.
pub fn identify_counterfactual(law: &ObservableLaw, a: u8) -> Result<CounterfactualLaw> {
    let d = law.dims;
    if d.d_w != d.d_z {
        return Err(Error::Dimension(format!("d_w = {} differs from d_z = {}", d.d_w, d.d_z)));
    }
    if a > 1 {
        return Err(Error::InvalidLaw(format!("treatment level {a} is not binary")));
    }
    let a = usize::from(a);
    let px = law.x_marginal();
    let mut out = Vec::with_capacity(d.d_x);
    for x in 0..d.d_x {
        if px[x] <= 0.0 {
            return Err(Error::ZeroCell(format!("Pr(X = {x}) is zero")));
        }
        let m = law.z_given_w(a, x)?;
        let condition = condition_number(&m);
        if !(condition <= COMPLETENESS_CEILING) {
            return Err(Error::CompletenessFailure { x, condition });
        }
        let lu = m.lu();
        // Pr(a | w_j, x)
        let inv_pa: Vec<f64> = (0..d.d_w)
            .map(|w| {
                let mass = |aa: usize| -> f64 {
                    (0..d.d_z).flat_map(|z| (0..d.d_y).map(move |y| (z, y))).map(|(z, y)| law.p(x, w, z, aa, y)).sum()
                };
                let pa = mass(a) / (mass(0) + mass(1));
                if pa > 0.0 {
                    Ok(1.0 / pa)
                } else {
                    Err(Error::ZeroCell(format!("Pr(A = {a} | W = {w}, X = {x}) is zero")))
                }
            })
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(d.d_y);
        for y in 0..d.d_y {
            let c = DVector::from_fn(d.d_z, |z, _| (0..d.d_w).map(|w| law.p(x, w, z, a, y)).sum::<f64>() / px[x]);
            let v = lu.solve(&c).ok_or(Error::CompletenessFailure { x, condition })?;
            let value: f64 = v.iter().zip(&inv_pa).map(|(vj, ij)| vj * ij).sum();
            if value < -IDENTIFICATION_TOL {
                return Err(Error::ModelIncompatibility(format!(
                    "identified Pr(Y({a}) = {y} | X = {x}) = {value:.3e} is negative"
                )));
            }
            row.push(value);
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > IDENTIFICATION_TOL {
            return Err(Error::ModelIncompatibility(format!(
                "identified Pr(Y({a}) | X = {x}) sums to {total}"
            )));
        }
        out.push(row);
    }
    Ok(out)
}

/// `Σ_u Pr(y | u, a, x) Pr(u | x)` computed from the latent law.
pub fn oracle_counterfactual(law: &CategoricalLaw, a: u8) -> Result<CounterfactualLaw> {
    let d = law.dims;
    let a = usize::from(a.min(1));
    let mass = |u: usize, x: usize, aa: Option<usize>, y: Option<usize>| -> f64 {
        let mut s = 0.0;
        for w in 0..d.d_w {
            for z in 0..d.d_z {
                for a2 in 0..2 {
                    for y2 in 0..d.d_y {
                        if aa.is_none_or(|v| v == a2) && y.is_none_or(|v| v == y2) {
                            s += law.p(u, x, w, z, a2, y2);
                        }
                    }
                }
            }
        }
        s
    };
    (0..d.d_x)
        .map(|x| {
            let pux: Vec<f64> = (0..d.d_u).map(|u| mass(u, x, None, None)).collect();
            let px: f64 = pux.iter().sum();
            if px <= 0.0 {
                return Err(Error::ZeroCell(format!("Pr(X = {x}) is zero")));
            }
            (0..d.d_y)
                .map(|y| {
                    let mut s = 0.0;
                    for u in 0..d.d_u {
                        if pux[u] == 0.0 {
                            continue;
                        }
                        let pua = mass(u, x, Some(a), None);
                        if pua <= 0.0 {
                            return Err(Error::ZeroCell(format!("Pr(U = {u}, A = {a}, X = {x}) is zero")));
                        }
                        s += mass(u, x, Some(a), Some(y)) / pua * pux[u] / px;
                    }
                    Ok(s)
                })
                .collect()
        })
        .collect()
}

/// `Σ_x w_x Σ_y y [cf1 − cf0]`.
pub fn ate_from_law(cf0: &CounterfactualLaw, cf1: &CounterfactualLaw, weights: &[f64], y_values: &[f64]) -> Result<f64> {
    if cf0.len() != cf1.len() || cf0.len() != weights.len() {
        return Err(Error::Dimension("counterfactual laws and weights differ in the number of strata".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidLaw(format!("stratum weights sum to {total}")));
    }
    let mut ate = 0.0;
    for ((r0, r1), wx) in cf0.iter().zip(cf1).zip(weights) {
        if r0.len() != y_values.len() || r1.len() != y_values.len() {
            return Err(Error::Dimension("outcome categories differ from outcome values".into()));
        }
        ate += wx * r1.iter().zip(r0).zip(y_values).map(|((p1, p0), y)| y * (p1 - p0)).sum::<f64>();
    }
    Ok(ate)
}

/// Both identified counterfactual laws and the ATE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub y0: CounterfactualLaw,
    pub y1: CounterfactualLaw,
    pub ate: f64,
}

pub fn identify(law: &ObservableLaw) -> Result<Identification> {
    let y0 = identify_counterfactual(law, 0)?;
    let y1 = identify_counterfactual(law, 1)?;
    let ate = ate_from_law(&y0, &y1, &law.x_marginal(), &law.y_values)?;
    Ok(Identification { y0, y1, ate })
}

pub fn oracle(law: &CategoricalLaw) -> Result<Identification> {
    let y0 = oracle_counterfactual(law, 0)?;
    let y1 = oracle_counterfactual(law, 1)?;
    let ate = ate_from_law(&y0, &y1, &law.observable().x_marginal(), &law.y_values)?;
    Ok(Identification { y0, y1, ate })
}

// ---------------------------------------------------------------------------
// Random laws

fn simplex<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

fn table<R: Rng + ?Sized>(rng: &mut R, parents: usize, d: usize) -> Vec<Vec<f64>> {
    (0..parents).map(|_| simplex(rng, d)).collect()
}

/// Random law factorizing as `P(x) P(u|x) P(a|u,x) P(z|u,a,x) P(w|u,x)
/// P(y|u,a,w,x)`, so that `W ⊥ (Z, A) | U, X` and `Y ⊥ Z | U, A, W, X`.
pub fn random_structured_law<R: Rng + ?Sized>(rng: &mut R, dims: LawDims) -> CategoricalLaw {
    let d = dims;
    let px = simplex(rng, d.d_x);
    let pu = table(rng, d.d_x, d.d_u);
    let pa = table(rng, d.d_x * d.d_u, 2);
    let pz = table(rng, d.d_x * d.d_u * 2, d.d_z);
    let pw = table(rng, d.d_x * d.d_u, d.d_w);
    let py = table(rng, d.d_x * d.d_u * 2 * d.d_w, d.d_y);
    let y_values = (0..d.d_y).map(|y| y as f64).collect();
    CategoricalLaw::from_fn(d, y_values, |u, x, w, z, a, y| {
        let ux = x * d.d_u + u;
        px[x] * pu[x][u] * pa[ux][a] * pz[ux * 2 + a][z] * pw[ux][w] * py[(ux * 2 + a) * d.d_w + w][y]
    })
    .expect("structured law is a valid distribution")
}

/// Like [`random_structured_law`] but `W` depends on `(Z, A)` given `(U, X)`.
pub fn random_violating_law<R: Rng + ?Sized>(rng: &mut R, dims: LawDims) -> CategoricalLaw {
    let d = dims;
    let px = simplex(rng, d.d_x);
    let pu = table(rng, d.d_x, d.d_u);
    let pa = table(rng, d.d_x * d.d_u, 2);
    let pz = table(rng, d.d_x * d.d_u * 2, d.d_z);
    let pw = table(rng, d.d_x * d.d_u * 2 * d.d_z, d.d_w);
    let py = table(rng, d.d_x * d.d_u * 2 * d.d_w, d.d_y);
    let y_values = (0..d.d_y).map(|y| y as f64).collect();
    CategoricalLaw::from_fn(d, y_values, |u, x, w, z, a, y| {
        let ux = x * d.d_u + u;
        px[x] * pu[x][u] * pa[ux][a] * pz[ux * 2 + a][z] * pw[(ux * 2 + a) * d.d_z + z][w] * py[(ux * 2 + a) * d.d_w + w][y]
    })
    .expect("violating law is a valid distribution")
}

/// Largest condition number of `Pr(Z | W, a, x)` over `a` and `x`.
pub fn max_condition(law: &ObservableLaw) -> f64 {
    let d = law.dims;
    let mut worst: f64 = 0.0;
    for x in 0..d.d_x {
        for a in 0..2 {
            worst = worst.max(law.z_given_w(a, x).map_or(f64::INFINITY, |m| condition_number(&m)));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// JSON

/// Category labels per axis; `u` is present only for latent laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<String>>,
    pub x: Vec<String>,
    pub w: Vec<String>,
    pub z: Vec<String>,
    #[serde(default = "default_a_labels")]
    pub a: Vec<String>,
    pub y: Vec<String>,
}

fn default_a_labels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// On-disk law: labels, optional numeric outcome values and a flat row-major
/// `(u, x, w, z, a, y)` array (without `u` for observable laws).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawFile {
    pub axes: LawAxes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_values: Option<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Latent(CategoricalLaw),
    Observable(ObservableLaw),
}

impl Law {
    pub fn observable(&self) -> ObservableLaw {
        match self {
            Law::Latent(l) => l.observable(),
            Law::Observable(o) => o.clone(),
        }
    }
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

impl LawFile {
    pub fn into_law(self) -> Result<Law> {
        let ax = &self.axes;
        if ax.a.len() != 2 {
            return Err(Error::InvalidLaw(format!("treatment axis has {} labels; it must be binary", ax.a.len())));
        }
        let d_u = ax.u.as_ref().map_or(1, Vec::len);
        let dims = LawDims::new(d_u, ax.x.len(), ax.w.len(), ax.z.len(), ax.y.len());
        let y_values = match self.y_values {
            Some(v) => v,
            None => ax
                .y
                .iter()
                .enumerate()
                .map(|(i, s)| s.trim().parse().unwrap_or(i as f64))
                .collect(),
        };
        if ax.u.is_some() {
            CategoricalLaw::new(dims, self.probabilities, y_values).map(Law::Latent)
        } else {
            ObservableLaw::new(dims, self.probabilities, y_values).map(Law::Observable)
        }
    }

    pub fn from_latent(law: &CategoricalLaw) -> Self {
        let d = law.dims;
        Self {
            axes: LawAxes {
                u: Some(labels(d.d_u)),
                x: labels(d.d_x),
                w: labels(d.d_w),
                z: labels(d.d_z),
                a: default_a_labels(),
                y: labels(d.d_y),
            },
            y_values: Some(law.y_values.clone()),
            probabilities: law.probs.clone(),
        }
    }
}

pub fn law_from_json(text: &str) -> Result<Law> {
    serde_json::from_str::<LawFile>(text)?.into_law()
}
