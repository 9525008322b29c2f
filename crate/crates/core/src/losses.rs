//! Margin-violation losses, the extreme empirical loss (empirical CVaR) and a
//! grid check of Fisher consistency.
//!
//! Every loss is a function of the violation `u = 1 - y f(x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("invalid loss parameters: {0}")]
    Parameter(String),
    #[error("empty value vector")]
    Empty,
    #[error("alpha must lie in [0, 1), got {0}")]
    Alpha(f64),
    #[error("probabilities must be non-negative, distinct and sum to 1 (p={p}, q={q})")]
    Probabilities { p: f64, q: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `max{0, u}`
    Hinge,
    /// `min{max{0, u}, a}`, `a >= 1`
    TruncatedHinge { a: f64 },
    /// `max{a u, u}`, `a <= 0`
    Pinball { a: f64 },
    /// `max{0, u - eps, a u + b}`, `eps >= 0`, `a, b <= 0`
    PinballEpsZone { eps: f64, a: f64, b: f64 },
    /// `max{u, min{a u, b}}`, `a <= 0`, `b >= 0`
    TruncatedPinball { a: f64, b: f64 },
    /// `u^2`
    LeastSquare,
}

impl LossSpec {
    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |m: &str| Err(LossError::Parameter(m.to_owned()));
        match *self {
            LossSpec::TruncatedHinge { a } if !(a >= 1.0) => bad("truncated hinge needs a >= 1"),
            LossSpec::Pinball { a } if !(a <= 0.0) => bad("pinball needs a <= 0"),
            LossSpec::PinballEpsZone { eps, a, b } if !(eps >= 0.0 && a <= 0.0 && b <= 0.0) => {
                bad("pinball with eps zone needs eps >= 0 and a, b <= 0")
            }
            LossSpec::TruncatedPinball { a, b } if !(a <= 0.0 && b >= 0.0) => {
                bad("truncated pinball needs a <= 0 and b >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            LossSpec::Hinge => u.max(0.0),
            LossSpec::TruncatedHinge { a } => u.max(0.0).min(a),
            LossSpec::Pinball { a } => (a * u).max(u),
            LossSpec::PinballEpsZone { eps, a, b } => 0.0f64.max(u - eps).max(a * u + b),
            LossSpec::TruncatedPinball { a, b } => u.max((a * u).min(b)),
            LossSpec::LeastSquare => u * u,
        }
    }
}

impl std::str::FromStr for LossSpec {
    type Err = LossError;

    /// `hinge`, `least-square`, `truncated-hinge:a`, `pinball:a`,
    /// `pinball-eps:eps,a,b`, `truncated-pinball:a,b`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| LossError::Parameter(format!("cannot parse parameters `{args}`")))?
        };
        let spec = match (name, nums.as_slice()) {
            ("hinge", []) => LossSpec::Hinge,
            ("least-square", []) => LossSpec::LeastSquare,
            ("truncated-hinge", [a]) => LossSpec::TruncatedHinge { a: *a },
            ("pinball", [a]) => LossSpec::Pinball { a: *a },
            ("pinball-eps", [eps, a, b]) => LossSpec::PinballEpsZone {
                eps: *eps,
                a: *a,
                b: *b,
            },
            ("truncated-pinball", [a, b]) => LossSpec::TruncatedPinball { a: *a, b: *b },
            _ => return Err(LossError::Parameter(format!("unknown loss `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn loss_eval(spec: &LossSpec, u: f64) -> Result<f64, LossError> {
    spec.validate()?;
    Ok(spec.eval(u))
}

/// Extreme empirical loss: `min_z z + sum_i max{v_i - z, 0} / (N (1 - alpha))`.
///
/// Evaluated in closed form. With `m = N (1 - alpha)` the value is the sum of
/// the `floor(m)` largest entries plus `m - floor(m)` times the next one, all
/// divided by `m`. When `m` is within `1e-9` of an integer `r` it is snapped
/// to `r`, so `alpha = 1 - r/N` gives the plain mean of the top `r` values.
pub fn eel(values: &[f64], alpha: f64) -> Result<f64, LossError> {
    if values.is_empty() {
        return Err(LossError::Empty);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(LossError::Alpha(alpha));
    }
    let n = values.len();
    let mut m = n as f64 * (1.0 - alpha);
    if (m - m.round()).abs() < 1e-9 {
        m = m.round();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let whole = (m.floor() as usize).min(n);
    let mut sum: f64 = sorted[..whole].iter().sum();
    let frac = m - whole as f64;
    if frac > 0.0 && whole < n {
        sum += frac * sorted[whole];
    }
    Ok(sum / m)
}

/// Grid minimizer of `p L(1 - z) + q L(1 + z)`.
///
/// Grid points are `z_min + i * step` rounded to 12 decimal places, which
/// removes accumulated drift (so `1.0` and `0.4` are hit exactly). Values within a
/// relative `1e-12` of the running minimum count as ties, which go to the
/// point closest to `sign(p - q)`.
pub fn fisher_argmin(
    spec: &LossSpec,
    p: f64,
    q: f64,
    grid: (f64, f64, f64),
) -> Result<f64, LossError> {
    spec.validate()?;
    if !(p >= 0.0 && q >= 0.0) || (p + q - 1.0).abs() > 1e-12 || p == q {
        return Err(LossError::Probabilities { p, q });
    }
    let (z_min, z_max, step) = grid;
    if !(step > 0.0 && z_min.is_finite() && z_max.is_finite() && z_max >= z_min) {
        return Err(LossError::Grid(format!("({z_min}, {z_max}, {step})")));
    }
    let target = (p - q).signum();
    let count = ((z_max - z_min) / step + 1e-9).floor() as usize;
    let mut best_z = z_min;
    let mut best_v = f64::INFINITY;
    for i in 0..=count {
        let z = z_min + (i as f64) * step;
        let z = (z * 1e12).round() / 1e12;
        let v = p * spec.eval(1.0 - z) + q * spec.eval(1.0 + z);
        let tol = 1e-12 * (1.0 + best_v.abs());
        if v < best_v - tol
            || ((v - best_v).abs() <= tol && (z - target).abs() < (best_z - target).abs())
        {
            best_v = v.min(best_v);
            best_z = z;
        }
    }
    Ok(best_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        assert_eq!(LossSpec::Hinge.eval(-1.0), 0.0);
        assert_eq!(LossSpec::Hinge.eval(2.0), 2.0);
        assert_eq!(LossSpec::TruncatedHinge { a: 1.0 }.eval(3.0), 1.0);
        assert_eq!(LossSpec::Pinball { a: -0.5 }.eval(-2.0), 1.0);
        assert_eq!(
            LossSpec::TruncatedPinball { a: -0.5, b: 1.0 }.eval(-4.0),
            1.0
        );
        assert_eq!(
            LossSpec::PinballEpsZone {
                eps: 0.5,
                a: -0.5,
                b: 0.0
            }
            .eval(0.25),
            0.0
        );
        assert_eq!(LossSpec::LeastSquare.eval(-3.0), 9.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(loss_eval(&LossSpec::TruncatedHinge { a: 0.5 }, 1.0).is_err());
        assert!(loss_eval(&LossSpec::Pinball { a: 0.1 }, 1.0).is_err());
        assert!("pinball:-0.5".parse::<LossSpec>().is_ok());
        assert!("pinball:0.5".parse::<LossSpec>().is_err());
        assert!("ramp".parse::<LossSpec>().is_err());
    }

    #[test]
    fn eel_examples() {
        assert!((eel(&[1.0, 2.0, 6.0], 0.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(eel(&[3.0, 1.0, 2.0], 1.0 - 1.0 / 3.0).unwrap(), 3.0);
        assert_eq!(eel(&[3.0, 1.0, 2.0], 1.0 - 2.0 / 3.0).unwrap(), 2.5);
        assert!(eel(&[], 0.1).is_err());
        assert!(eel(&[1.0], 1.0).is_err());
    }

    #[test]
    fn fisher_examples() {
        let grid = (-3.0, 3.0, 1e-3);
        assert_eq!(
            fisher_argmin(&LossSpec::Hinge, 0.7, 0.3, grid).unwrap(),
            1.0
        );
        assert_eq!(
            fisher_argmin(&LossSpec::Hinge, 0.3, 0.7, grid).unwrap(),
            -1.0
        );
        let z = fisher_argmin(&LossSpec::LeastSquare, 0.7, 0.3, grid).unwrap();
        assert_eq!(z, 0.4);
        assert!(fisher_argmin(&LossSpec::Hinge, 0.7, 0.4, grid).is_err());
        assert!(fisher_argmin(&LossSpec::Hinge, 0.5, 0.5, grid).is_err());
    }
}
