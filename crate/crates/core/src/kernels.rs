//! Positive-definite kernels and Gram matrices.
//!
//! The generalized exponential kernel
//!
//! ```text
//! k(x, y) = exp(-Σ_i |(x_i - y_i) / s_i|^p),   0 < p ≤ 2, s_i > 0
//! ```
//!
//! is positive definite on the whole exponent range and bounded in (0, 1].
//! With `p = 2, s_i = √2 σ` it is the Gaussian RBF kernel and with
//! `p = 1, s_i = σ` the Laplacian kernel. Polynomial and sigmoid kernels are
//! provided for comparison; they are not positive definite in general.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The kernel value is NaN, infinite, or an exponential kernel whose
    /// exponent is so large that the value underflows to zero.
    #[error("exponent diverges: kernel value {value} at {}", fmt_index(.at))]
    NonFinite {
        at: Option<(usize, usize)>,
        value: f64,
    },

    #[error("a Gram matrix needs at least 2 rows, got {0}")]
    TooFewRows(usize),
}

fn fmt_index(at: &Option<(usize, usize)>) -> String {
    match at {
        Some((i, j)) => format!("({i}, {j})"),
        None => "evaluation".to_string(),
    }
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// Kernel family and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `exp(-Σ |(x_i - y_i)/s_i|^p)`
    Proposed { p: f64, scales: Vec<f64> },
    /// `(<x, y> + c)^d`
    Polynomial { c: f64, degree: u32 },
    /// `exp(-‖x - y‖² / (2σ²))`
    Rbf { sigma: f64 },
    /// `exp(-‖x - y‖ / σ)`
    Laplacian { sigma: f64 },
    /// `tanh(a <x, y> + b)`
    Sigmoid { a: f64, b: f64 },
}

/// A validated kernel. Invalid hyperparameters are rejected by the
/// constructors (and by deserialization), never at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfig", into = "KernelConfig")]
pub struct KernelSpec {
    kind: KernelKind,
}

impl KernelSpec {
    pub fn proposed(p: f64, scales: Vec<f64>) -> Result<Self> {
        if !(p > 0.0 && p <= 2.0) {
            return Err(KernelError::InvalidParameter(format!(
                "exponent p must lie in (0, 2], got {p}"
            )));
        }
        if scales.is_empty() {
            return Err(KernelError::InvalidParameter(
                "at least one scale is required".into(),
            ));
        }
        if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(KernelError::InvalidParameter(format!(
                "scales must be positive and finite, got {s}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Proposed { p, scales },
        })
    }

    /// Proposed kernel with the same scale on each of `dim` coordinates.
    pub fn proposed_uniform(p: f64, scale: f64, dim: usize) -> Result<Self> {
        Self::proposed(p, vec![scale; dim])
    }

    pub fn polynomial(c: f64, degree: u32) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "polynomial offset c must be nonnegative, got {c}"
            )));
        }
        if degree == 0 {
            return Err(KernelError::InvalidParameter(
                "polynomial degree must be positive".into(),
            ));
        }
        Ok(Self {
            kind: KernelKind::Polynomial { c, degree },
        })
    }

    pub fn rbf(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: KernelKind::Rbf { sigma },
        })
    }

    pub fn laplacian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: KernelKind::Laplacian { sigma },
        })
    }

    pub fn sigmoid(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0 && b.is_finite() && b >= 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "sigmoid parameters must be nonnegative, got a={a}, b={b}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Sigmoid { a, b },
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Short family name as used in config files.
    pub fn family(&self) -> &'static str {
        match self.kind {
            KernelKind::Proposed { .. } => "proposed",
            KernelKind::Polynomial { .. } => "polynomial",
            KernelKind::Rbf { .. } => "rbf",
            KernelKind::Laplacian { .. } => "laplacian",
            KernelKind::Sigmoid { .. } => "sigmoid",
        }
    }

    /// Input dimension the kernel is tied to, if any.
    pub fn dimension(&self) -> Option<usize> {
        match &self.kind {
            KernelKind::Proposed { scales, .. } => Some(scales.len()),
            _ => None,
        }
    }

    /// Kernels of the form `exp(-exponent)`, whose values must lie in (0, 1].
    pub fn is_exponential(&self) -> bool {
        matches!(
            self.kind,
            KernelKind::Proposed { .. } | KernelKind::Rbf { .. } | KernelKind::Laplacian { .. }
        )
    }

    /// Human-readable hyperparameter summary, e.g. `p=1/2, s=0.94`.
    pub fn hyperparameters(&self) -> String {
        match &self.kind {
            KernelKind::Proposed { p, scales } => {
                let s = if scales.iter().all(|s| *s == scales[0]) {
                    format!("{}", scales[0])
                } else {
                    let parts: Vec<String> = scales.iter().map(|s| s.to_string()).collect();
                    format!("({})", parts.join(", "))
                };
                format!("p={}, s={s}", format_exponent(*p))
            }
            KernelKind::Polynomial { c, degree } => format!("c={c}, d={degree}"),
            KernelKind::Rbf { sigma } | KernelKind::Laplacian { sigma } => format!("sigma={sigma}"),
            KernelKind::Sigmoid { a, b } => format!("a={a}, b={b}"),
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.dimension() {
            Some(d) if d != n => Err(KernelError::DimensionMismatch {
                expected: d,
                found: n,
            }),
            _ => Ok(()),
        }
    }

    /// Raw kernel value, no validation.
    #[inline]
    pub(crate) fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Proposed { p, scales } => {
                let p = *p;
                let mut exponent = 0.0;
                for ((a, b), s) in x.iter().zip(y).zip(scales) {
                    exponent += scaled_power((a - b) / s, p);
                }
                (-exponent).exp()
            }
            KernelKind::Polynomial { c, degree } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + c).powi(*degree as i32)
            }
            KernelKind::Rbf { sigma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
            KernelKind::Laplacian { sigma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq.sqrt() / sigma).exp()
            }
            KernelKind::Sigmoid { a, b } => {
                let dot: f64 = x.iter().zip(y).map(|(u, v)| u * v).sum();
                (a * dot + b).tanh()
            }
        }
    }

    #[inline]
    fn admissible(&self, v: f64) -> bool {
        if self.is_exponential() {
            v.is_finite() && v > 0.0
        } else {
            v.is_finite()
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )))
    }
}

/// `|t|^p` with the limit convention `0^p = 0`.
#[inline]
fn scaled_power(t: f64, p: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        0.0
    } else if p == 2.0 {
        t * t
    } else if p == 1.0 {
        t
    } else if p == 0.5 {
        t.sqrt()
    } else {
        t.powf(p)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.family(), self.hyperparameters())
    }
}

/// Evaluate `k(x, y)`.
///
/// Exponential kernels report [`KernelError::NonFinite`] when the exponent is
/// large enough that the value leaves (0, 1].
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KernelError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    spec.check_dim(x.len())?;
    let v = spec.value(x, y);
    if spec.admissible(v) {
        Ok(v)
    } else {
        Err(KernelError::NonFinite { at: None, value: v })
    }
}

/// Symmetric M×M Gram matrix, optionally double-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    centered: bool,
    spec: KernelSpec,
}

impl KernelMatrix {
    /// Wrap precomputed values. They must be square, finite and exactly symmetric.
    pub fn from_values(values: Array2<f64>, centered: bool, spec: KernelSpec) -> Result<Self> {
        let (m, n) = values.dim();
        if m != n {
            return Err(KernelError::DimensionMismatch {
                expected: m,
                found: n,
            });
        }
        for i in 0..m {
            for j in 0..m {
                let v = values[[i, j]];
                if !v.is_finite() {
                    return Err(KernelError::NonFinite {
                        at: Some((i, j)),
                        value: v,
                    });
                }
                if v.to_bits() != values[[j, i]].to_bits() {
                    return Err(KernelError::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            centered,
            spec,
        })
    }

    pub(crate) fn from_parts_unchecked(values: Array2<f64>, centered: bool, spec: KernelSpec) -> Self {
        Self {
            values,
            centered,
            spec,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

/// Build the uncentered Gram matrix of `data` (one observation per row).
///
/// Each pair is evaluated once and mirrored, so the result is bitwise
/// symmetric. Rows are filled in parallel.
pub fn kernel_matrix(spec: &KernelSpec, data: ArrayView2<'_, f64>) -> Result<KernelMatrix> {
    let (m, n) = data.dim();
    if m < 2 {
        return Err(KernelError::TooFewRows(m));
    }
    spec.check_dim(n)?;
    let rows: Vec<Vec<f64>> = data.rows().into_iter().map(|r| r.to_vec()).collect();

    let upper: Vec<std::result::Result<Vec<f64>, (usize, f64)>> = par::map_range(m, |i| {
        let xi = &rows[i];
        let mut out = Vec::with_capacity(m - i);
        for (j, xj) in rows.iter().enumerate().skip(i) {
            let v = spec.value(xi, xj);
            if !spec.admissible(v) {
                return Err((j, v));
            }
            out.push(v);
        }
        Ok(out)
    });

    let mut values = Array2::<f64>::zeros((m, m));
    for (i, row) in upper.into_iter().enumerate() {
        let row = row.map_err(|(j, value)| KernelError::NonFinite {
            at: Some((i, j)),
            value,
        })?;
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(KernelMatrix {
        values,
        centered: false,
        spec: spec.clone(),
    })
}

/// Kernel row `k(x_i, x)` for every training row `x_i`.
pub(crate) fn kernel_row(spec: &KernelSpec, train: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    train
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let v = spec.value(xi, x);
            if spec.admissible(v) {
                Ok(v)
            } else {
                Err(KernelError::NonFinite {
                    at: Some((i, 0)),
                    value: v,
                })
            }
        })
        .collect()
}

/// Parse an exponent written either as a decimal (`0.5`) or a ratio of
/// decimals (`1/1.5`).
pub fn parse_exponent(text: &str) -> Result<f64> {
    let text = text.trim();
    let bad = || KernelError::InvalidParameter(format!("cannot parse exponent {text:?}"));
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            num / den
        }
        None => text.parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Render an exponent the way grids are usually written: integers plainly,
/// fractions below one as `1/x` when `1/p` has a short decimal form.
pub fn format_exponent(p: f64) -> String {
    if p >= 1.0 && p.fract() == 0.0 {
        return format!("{p}");
    }
    if p < 1.0 {
        let inv = 1.0 / p;
        let rounded = (inv * 1000.0).round() / 1000.0;
        if (inv - rounded).abs() < 1e-12 * inv {
            return format!("1/{rounded}");
        }
    }
    format!("{p}")
}

/// Exponent as it appears in config files: a number or a `"a/b"` string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentValue {
    Number(f64),
    #[serde(with = "exponent_text")]
    Text(f64),
}

impl ExponentValue {
    pub fn value(self) -> f64 {
        match self {
            ExponentValue::Number(v) | ExponentValue::Text(v) => v,
        }
    }
}

mod exponent_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_exponent(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_exponent(&text).map_err(serde::de::Error::custom)
    }
}

/// Serialized form of [`KernelSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum KernelConfig {
    Proposed {
        p: ExponentValue,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
        /// Common scale, used together with `dim` when `scales` is absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Polynomial {
        c: f64,
        d: u32,
    },
    Rbf {
        sigma: f64,
    },
    Laplacian {
        sigma: f64,
    },
    Sigmoid {
        a: f64,
        b: f64,
    },
}

impl TryFrom<KernelConfig> for KernelSpec {
    type Error = KernelError;

    fn try_from(cfg: KernelConfig) -> Result<Self> {
        match cfg {
            KernelConfig::Proposed { p, scales, s, dim } => {
                let scales = match (scales, s, dim) {
                    (Some(scales), _, _) => scales,
                    (None, Some(s), Some(dim)) => vec![s; dim],
                    _ => {
                        return Err(KernelError::InvalidParameter(
                            "proposed kernel needs `scales` or both `s` and `dim`".into(),
                        ))
                    }
                };
                KernelSpec::proposed(p.value(), scales)
            }
            KernelConfig::Polynomial { c, d } => KernelSpec::polynomial(c, d),
            KernelConfig::Rbf { sigma } => KernelSpec::rbf(sigma),
            KernelConfig::Laplacian { sigma } => KernelSpec::laplacian(sigma),
            KernelConfig::Sigmoid { a, b } => KernelSpec::sigmoid(a, b),
        }
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(spec: KernelSpec) -> Self {
        match spec.kind {
            KernelKind::Proposed { p, scales } => KernelConfig::Proposed {
                p: ExponentValue::Number(p),
                scales: Some(scales),
                s: None,
                dim: None,
            },
            KernelKind::Polynomial { c, degree } => KernelConfig::Polynomial { c, d: degree },
            KernelKind::Rbf { sigma } => KernelConfig::Rbf { sigma },
            KernelKind::Laplacian { sigma } => KernelConfig::Laplacian { sigma },
            KernelKind::Sigmoid { a, b } => KernelConfig::Sigmoid { a, b },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn proposed_self_similarity_is_one() {
        let k = KernelSpec::proposed(0.5, vec![1.0, 1.0]).unwrap();
        assert_eq!(eval_kernel(&k, &[3.7, -2.0], &[3.7, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn proposed_closed_form() {
        let s = 2f64.sqrt();
        let k = KernelSpec::proposed(2.0, vec![s, s]).unwrap();
        let v = eval_kernel(&k, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn linear_polynomial_is_dot_product() {
        let k = KernelSpec::polynomial(0.0, 1).unwrap();
        assert_eq!(eval_kernel(&k, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn laplacian_uses_euclidean_norm() {
        let k = KernelSpec::laplacian(2.0).unwrap();
        let v = eval_kernel(&k, &[3.0, 0.0], &[0.0, 4.0]).unwrap();
        assert_relative_eq!(v, (-2.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.082085, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(KernelSpec::proposed(2.5, vec![1.0]).is_err());
        assert!(KernelSpec::proposed(0.0, vec![1.0]).is_err());
        assert!(KernelSpec::proposed(-1.0, vec![1.0]).is_err());
        assert!(KernelSpec::proposed(1.0, vec![1.0, 0.0]).is_err());
        assert!(KernelSpec::proposed(1.0, vec![]).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::laplacian(-1.0).is_err());
        assert!(KernelSpec::polynomial(-1.0, 1).is_err());
        assert!(KernelSpec::polynomial(0.0, 0).is_err());
        assert!(KernelSpec::sigmoid(-0.1, 0.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let k = KernelSpec::proposed(1.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            eval_kernel(&k, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]),
            Err(KernelError::DimensionMismatch { .. })
        ));
        let r = KernelSpec::rbf(1.0).unwrap();
        assert!(eval_kernel(&r, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_coordinate_difference_does_not_produce_nan() {
        let k = KernelSpec::proposed(0.3, vec![1.0, 1.0]).unwrap();
        let v = eval_kernel(&k, &[1.0, 5.0], &[1.0, 4.0]).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn divergent_exponent_is_reported() {
        let k = KernelSpec::proposed(2.0, vec![0.1]).unwrap();
        let err = eval_kernel(&k, &[0.0], &[10.0]).unwrap_err();
        assert!(matches!(err, KernelError::NonFinite { at: None, .. }));
        let r = KernelSpec::rbf(0.01).unwrap();
        assert!(eval_kernel(&r, &[0.0], &[5.0]).is_err());
    }

    #[test]
    fn two_point_gram() {
        let k = KernelSpec::proposed(1.0, vec![1.0]).unwrap();
        let km = kernel_matrix(&k, array![[0.0], [1.0]].view()).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(km.values(), &array![[1.0, e], [e, 1.0]]);
        assert!(!km.is_centered());
    }

    #[test]
    fn single_row_gram_is_rejected() {
        let k = KernelSpec::rbf(1.0).unwrap();
        assert_eq!(
            kernel_matrix(&k, array![[0.0, 1.0]].view()).unwrap_err(),
            KernelError::TooFewRows(1)
        );
    }

    #[test]
    fn gram_reports_offending_pair() {
        let k = KernelSpec::rbf(0.05).unwrap();
        let data = array![[0.0], [0.01], [100.0]];
        match kernel_matrix(&k, data.view()).unwrap_err() {
            KernelError::NonFinite { at, .. } => assert_eq!(at, Some((0, 2))),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn exponent_parsing_and_formatting() {
        assert_eq!(parse_exponent("1/2").unwrap(), 0.5);
        assert_eq!(parse_exponent("1/1.5").unwrap(), 1.0 / 1.5);
        assert_eq!(parse_exponent(" 2 ").unwrap(), 2.0);
        assert!(parse_exponent("a/b").is_err());
        assert!(parse_exponent("1/0").is_err());
        assert_eq!(format_exponent(2.0), "2");
        assert_eq!(format_exponent(1.0), "1");
        assert_eq!(format_exponent(0.5), "1/2");
        assert_eq!(format_exponent(1.0 / 1.5), "1/1.5");
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"kernel":"proposed","p":"1/1.5","s":0.94,"dim":3}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(
            spec,
            KernelSpec::proposed(1.0 / 1.5, vec![0.94, 0.94, 0.94]).unwrap()
        );
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);

        let lap: KernelSpec = serde_json::from_str(r#"{"kernel":"laplacian","sigma":1.08}"#).unwrap();
        assert_eq!(lap, KernelSpec::laplacian(1.08).unwrap());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"kernel":"proposed","p":3,"s":1,"dim":2}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"kernel":"rbf","sigma":-1}"#).is_err());
    }

    #[test]
    fn labels() {
        let k = KernelSpec::proposed_uniform(0.5, 0.94, 9).unwrap();
        assert_eq!(k.hyperparameters(), "p=1/2, s=0.94");
        assert_eq!(k.to_string(), "proposed(p=1/2, s=0.94)");
    }
}
