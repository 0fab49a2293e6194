//! Indicator functionals `a(u)`: where the filter is allowed to act.
//!
//! All bounded kinds map into `[0, 1]`, close to 0 in laminar or coherent
//! rotating regions and close to 1 where the flow is dominated by strain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_tensor, FaceVectorField, Field, Location};

/// Default regulariser for the normalised indicators.
pub const DEFAULT_ETA: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    /// `a = 1`: the linear differential filter.
    Constant,
    /// `a = |grad u|` (Frobenius). Not bounded by 1.
    RawSmagorinsky,
    /// `a = |grad u| / (max |grad u| + eta)`.
    NormalizedGradient { eta: f64 },
    /// `a = |S|^2 / (|S|^2 + |W|^2 + eta)`: 0 for rigid rotation, 1 for pure strain.
    QCriterion { eta: f64 },
    /// `a = sqrt(B_beta) / (alpha:alpha + eta)` with `alpha = grad u`,
    /// `beta = alpha^T alpha` and the 2D invariant `B_beta = det(beta)`.
    Vreman { eta: f64 },
    /// Geometric mean of the listed indicators.
    GeometricMean(Vec<IndicatorKind>),
}

impl IndicatorKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            IndicatorKind::Constant | IndicatorKind::RawSmagorinsky => Ok(()),
            IndicatorKind::NormalizedGradient { eta }
            | IndicatorKind::QCriterion { eta }
            | IndicatorKind::Vreman { eta } => {
                if *eta >= 0.0 && eta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "indicator regulariser eta must be >= 0, got {eta}"
                    )))
                }
            }
            IndicatorKind::GeometricMean(kinds) => {
                if kinds.is_empty() {
                    return Err(Error::InvalidConfig("geometric mean of no indicators".into()));
                }
                kinds.iter().try_for_each(|k| k.validate())
            }
        }
    }

    /// Whether `0 <= a <= 1` is guaranteed.
    pub fn is_bounded(&self) -> bool {
        match self {
            IndicatorKind::RawSmagorinsky => false,
            IndicatorKind::GeometricMean(kinds) => kinds.iter().all(|k| k.is_bounded()),
            _ => true,
        }
    }

    /// Parses `constant`, `raw_smagorinsky`, `normalized_gradient`,
    /// `q_criterion`, `vreman` or `geometric_mean(k1, k2, ...)`.
    pub fn parse(s: &str, eta: f64) -> Result<Self> {
        let s = s.trim();
        let kind = match s {
            "constant" => IndicatorKind::Constant,
            "raw_smagorinsky" => IndicatorKind::RawSmagorinsky,
            "normalized_gradient" => IndicatorKind::NormalizedGradient { eta },
            "q_criterion" => IndicatorKind::QCriterion { eta },
            "vreman" => IndicatorKind::Vreman { eta },
            _ => {
                let inner = s
                    .strip_prefix("geometric_mean(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown indicator {s:?}")))?;
                let kinds = split_top_level(inner)
                    .into_iter()
                    .map(|p| Self::parse(p, eta))
                    .collect::<Result<Vec<_>>>()?;
                IndicatorKind::GeometricMean(kinds)
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (k, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..k]);
                start = k + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() {
        parts.push(&s[start..]);
    }
    parts
}

impl fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndicatorKind::Constant => write!(f, "constant"),
            IndicatorKind::RawSmagorinsky => write!(f, "raw_smagorinsky"),
            IndicatorKind::NormalizedGradient { .. } => write!(f, "normalized_gradient"),
            IndicatorKind::QCriterion { .. } => write!(f, "q_criterion"),
            IndicatorKind::Vreman { .. } => write!(f, "vreman"),
            IndicatorKind::GeometricMean(kinds) => {
                write!(f, "geometric_mean(")?;
                for (n, k) in kinds.iter().enumerate() {
                    if n > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[inline]
fn frob2([a, b, c, d]: [f64; 4]) -> f64 {
    a * a + b * b + c * c + d * d
}

/// Indicator values at cell centres for the velocity `w`.
pub fn eval_indicator(kind: &IndicatorKind, w: &FaceVectorField) -> Field {
    let g = *w.grid();
    match kind {
        IndicatorKind::Constant => Field::constant(&g, Location::Cell, 1.0),
        IndicatorKind::GeometricMean(kinds) => {
            let n = kinds.len() as f64;
            let mut acc = Field::constant(&g, Location::Cell, 1.0);
            for k in kinds {
                let a = eval_indicator(k, w);
                acc.values_mut().iter_mut().zip(a.values()).for_each(|(p, q)| *p *= q);
            }
            acc.map(|p| p.max(0.0).powf(1.0 / n))
        }
        _ => {
            let t = grad_tensor(w);
            let n = g.nx() * g.ny();
            let mut out = Field::zeros(&g, Location::Cell);
            let vals = out.values_mut();
            match *kind {
                IndicatorKind::RawSmagorinsky => {
                    for (k, v) in vals.iter_mut().enumerate() {
                        *v = frob2(t.at(k)).sqrt();
                    }
                }
                IndicatorKind::NormalizedGradient { eta } => {
                    let mags: Vec<f64> = (0..n).map(|k| frob2(t.at(k)).sqrt()).collect();
                    let max = mags.iter().fold(0.0f64, |m, &x| m.max(x));
                    for (v, m) in vals.iter_mut().zip(&mags) {
                        *v = m / (max + eta);
                    }
                }
                IndicatorKind::QCriterion { eta } => {
                    for (k, v) in vals.iter_mut().enumerate() {
                        let [a, b, c, d] = t.at(k);
                        let s2 = a * a + d * d + 0.5 * (b + c) * (b + c);
                        let w2 = 0.5 * (b - c) * (b - c);
                        let denom = s2 + w2 + eta;
                        *v = if denom > 0.0 { (s2 / denom).clamp(0.0, 1.0) } else { 0.0 };
                    }
                }
                IndicatorKind::Vreman { eta } => {
                    for (k, v) in vals.iter_mut().enumerate() {
                        let [a, b, c, d] = t.at(k);
                        // det(alpha^T alpha) = det(alpha)^2 in 2D
                        let sqrt_b = (a * d - b * c).abs();
                        let denom = frob2([a, b, c, d]) + eta;
                        *v = if denom > 0.0 {
                            (sqrt_b / denom).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                    }
                }
                IndicatorKind::Constant | IndicatorKind::GeometricMean(_) => unreachable!(),
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn all_kinds() -> Vec<IndicatorKind> {
        vec![
            IndicatorKind::RawSmagorinsky,
            IndicatorKind::NormalizedGradient { eta: DEFAULT_ETA },
            IndicatorKind::QCriterion { eta: DEFAULT_ETA },
            IndicatorKind::Vreman { eta: DEFAULT_ETA },
            IndicatorKind::GeometricMean(vec![
                IndicatorKind::QCriterion { eta: DEFAULT_ETA },
                IndicatorKind::Vreman { eta: DEFAULT_ETA },
            ]),
        ]
    }

    #[test]
    fn zero_velocity() {
        let g = make_grid(6, 6, 1.0, 1.0).unwrap();
        let w = FaceVectorField::zeros(&g);
        for k in all_kinds() {
            assert_eq!(eval_indicator(&k, &w).max_abs(), 0.0, "{k}");
        }
        let c = eval_indicator(&IndicatorKind::Constant, &w);
        assert!(c.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn normalized_gradient_of_pure_shear_is_uniform() {
        let g = make_grid(10, 10, 1.0, 1.0).unwrap();
        let w = FaceVectorField::from_fn(&g, |_, y| (y, 0.0));
        let eta = 1e-3;
        let a = eval_indicator(&IndicatorKind::NormalizedGradient { eta }, &w);
        for &v in a.values() {
            assert!((v - 1.0 / (1.0 + eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn q_criterion_vanishes_for_rigid_rotation() {
        let g = make_grid(12, 12, 1.0, 1.0).unwrap();
        let w = FaceVectorField::from_fn(&g, |x, y| (-(y - 0.5), x - 0.5));
        let a = eval_indicator(&IndicatorKind::QCriterion { eta: DEFAULT_ETA }, &w);
        assert!(a.max_abs() < 1e-12);
        // pure strain is the other extreme
        let s = FaceVectorField::from_fn(&g, |x, y| (x, -y));
        let a = eval_indicator(&IndicatorKind::QCriterion { eta: DEFAULT_ETA }, &s);
        assert!(a.values().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn bounded_kinds_stay_in_unit_interval() {
        let g = make_grid(16, 16, 1.0, 1.0).unwrap();
        let w = FaceVectorField::from_fn(&g, |x, y| ((7.0 * x * y).sin() * 40.0, (3.0 * x).cos() - y * y));
        for k in all_kinds().into_iter().filter(|k| k.is_bounded()) {
            let a = eval_indicator(&k, &w);
            assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)), "{k}");
        }
        let raw = eval_indicator(&IndicatorKind::RawSmagorinsky, &w);
        assert!(raw.max_abs() > 1.0);
    }

    #[test]
    fn parse_and_display() {
        let k = IndicatorKind::parse("geometric_mean(q_criterion, vreman)", 0.5).unwrap();
        assert_eq!(
            k,
            IndicatorKind::GeometricMean(vec![
                IndicatorKind::QCriterion { eta: 0.5 },
                IndicatorKind::Vreman { eta: 0.5 }
            ])
        );
        assert_eq!(k.to_string(), "geometric_mean(q_criterion,vreman)");
        assert!(IndicatorKind::parse("helicity", 0.0).is_err());
        assert!(IndicatorKind::parse("geometric_mean()", 0.0).is_err());
        assert!(IndicatorKind::parse("vreman", -1.0).is_err());
        assert!(!IndicatorKind::parse("geometric_mean(raw_smagorinsky,vreman)", 0.0)
            .unwrap()
            .is_bounded());
    }
}
