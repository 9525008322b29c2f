//! Audit metrics for decisions stratified by a protected attribute:
//! two-sample Kolmogorov–Smirnov distance, denial rates, demographic
//! disparity and its stratum-weighted aggregate (CDD).
//!
//! An outcome of `-1` is a denial.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("empty sample")]
    Empty,
    #[error("strata and outcomes differ in length ({strata} vs {outcomes})")]
    Length { strata: usize, outcomes: usize },
    #[error("outcome {0} is not -1 or +1")]
    Outcome(f64),
    #[error("no strata")]
    NoStrata,
    #[error("disparity is undefined when one outcome class is absent")]
    UndefinedDisparity,
    #[error("unknown stratum `{0}`")]
    UnknownStratum(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedOutcome {
    strata: Vec<String>,
    outcomes: Vec<f64>,
    levels: Vec<String>,
}

impl StratifiedOutcome {
    /// Levels are the distinct strata in order of first appearance.
    pub fn new(strata: Vec<String>, outcomes: Vec<f64>) -> Result<Self, FairnessError> {
        let mut levels: Vec<String> = Vec::new();
        for s in &strata {
            if !levels.contains(s) {
                levels.push(s.clone());
            }
        }
        Self::with_levels(strata, outcomes, levels)
    }

    /// Declared levels may include strata with no rows; those are reported
    /// with absent rates and carry zero weight.
    pub fn with_levels(
        strata: Vec<String>,
        outcomes: Vec<f64>,
        levels: Vec<String>,
    ) -> Result<Self, FairnessError> {
        if strata.len() != outcomes.len() {
            return Err(FairnessError::Length {
                strata: strata.len(),
                outcomes: outcomes.len(),
            });
        }
        if let Some(&y) = outcomes.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(FairnessError::Outcome(y));
        }
        if levels.is_empty() {
            return Err(FairnessError::NoStrata);
        }
        if let Some(s) = strata.iter().find(|s| !levels.contains(s)) {
            return Err(FairnessError::UnknownStratum(s.clone()));
        }
        Ok(Self {
            strata,
            outcomes,
            levels,
        })
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// (rows in stratum, denials in stratum, approvals in stratum)
    fn counts(&self, level: &str) -> (usize, usize, usize) {
        let mut denied = 0;
        let mut approved = 0;
        for (s, &y) in self.strata.iter().zip(&self.outcomes) {
            if s == level {
                if y < 0.0 {
                    denied += 1;
                } else {
                    approved += 1;
                }
            }
        }
        (denied + approved, denied, approved)
    }

    fn totals(&self) -> (usize, usize) {
        let denied = self.outcomes.iter().filter(|&&y| y < 0.0).count();
        (denied, self.outcomes.len() - denied)
    }
}

/// Largest gap between the right-continuous empirical CDFs of `a` and `b`,
/// evaluated exactly at every sample point.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64, FairnessError> {
    if a.is_empty() || b.is_empty() {
        return Err(FairnessError::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenialRates {
    pub overall: f64,
    /// `Pr(Y = -1 | S = l)` per level; `None` for an empty stratum.
    pub by_stratum: Vec<(String, Option<f64>)>,
}

pub fn denial_rates(s: &StratifiedOutcome) -> Result<DenialRates, FairnessError> {
    if s.is_empty() {
        return Err(FairnessError::Empty);
    }
    let (denied, _) = s.totals();
    let by_stratum = s
        .levels
        .iter()
        .map(|l| {
            let (count, d, _) = s.counts(l);
            let rate = (count > 0).then(|| d as f64 / count as f64);
            (l.clone(), rate)
        })
        .collect();
    Ok(DenialRates {
        overall: denied as f64 / s.len() as f64,
        by_stratum,
    })
}

/// Numerator over the common denominator `denials * approvals`, kept in
/// integers so cancellation between strata is exact.
fn disparity_numerator(s: &StratifiedOutcome, level: &str) -> Result<(i128, i128), FairnessError> {
    if !s.levels.iter().any(|l| l == level) {
        return Err(FairnessError::UnknownStratum(level.to_owned()));
    }
    let (denied, approved) = s.totals();
    if denied == 0 || approved == 0 {
        return Err(FairnessError::UndefinedDisparity);
    }
    let (_, d, a) = s.counts(level);
    Ok((
        d as i128 * approved as i128 - a as i128 * denied as i128,
        denied as i128 * approved as i128,
    ))
}

/// `Pr(S = l | Y = -1) - Pr(S = l | Y = +1)`.
pub fn demographic_disparity(s: &StratifiedOutcome, level: &str) -> Result<f64, FairnessError> {
    let (num, den) = disparity_numerator(s, level)?;
    Ok(num as f64 / den as f64)
}

/// `sum_l Pr(S = l) DD_l`, summed as an exact rational.
pub fn cdd(s: &StratifiedOutcome) -> Result<f64, FairnessError> {
    let mut num: i128 = 0;
    let mut den: i128 = 1;
    for l in &s.levels {
        let (count, _, _) = s.counts(l);
        let (n_l, d_l) = disparity_numerator(s, l)?;
        num += count as i128 * n_l;
        den = d_l;
    }
    Ok(num as f64 / (den as f64 * s.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumReport {
    pub stratum: String,
    pub count: usize,
    pub denial_rate: Option<f64>,
    pub disparity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub overall_denial_rate: f64,
    pub strata: Vec<StratumReport>,
    /// `None` when one outcome class is absent.
    pub cdd: Option<f64>,
}

pub fn fairness_report(s: &StratifiedOutcome) -> Result<FairnessReport, FairnessError> {
    let rates = denial_rates(s)?;
    let strata = rates
        .by_stratum
        .iter()
        .map(|(l, rate)| StratumReport {
            stratum: l.clone(),
            count: s.counts(l).0,
            denial_rate: *rate,
            disparity: demographic_disparity(s, l).ok(),
        })
        .collect();
    Ok(FairnessReport {
        overall_denial_rate: rates.overall,
        strata,
        cdd: cdd(s).ok(),
    })
}

impl FairnessReport {
    /// Rows `source,stratum,count,denial_rate,disparity,cdd` without a
    /// header: one `overall` row carrying CDD, then one row per stratum.
    pub fn write_csv<W: Write>(&self, source: &str, mut out: W) -> std::io::Result<()> {
        let f = |x: Option<f64>| x.map_or("NA".to_owned(), |v| format!("{v:?}"));
        let total: usize = self.strata.iter().map(|s| s.count).sum();
        writeln!(
            out,
            "{source},overall,{total},{},NA,{}",
            f(Some(self.overall_denial_rate)),
            f(self.cdd)
        )?;
        for s in &self.strata {
            writeln!(
                out,
                "{source},{},{},{},{},NA",
                s.stratum,
                s.count,
                f(s.denial_rate),
                f(s.disparity)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, f64)]) -> StratifiedOutcome {
        StratifiedOutcome::new(
            rows.iter().map(|r| r.0.to_owned()).collect(),
            rows.iter().map(|r| r.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.5, 2.5]).unwrap(), 0.5);
        assert!(ks_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn rates() {
        let t = table(&[("A", -1.0), ("A", -1.0), ("B", 1.0), ("B", 1.0)]);
        let r = denial_rates(&t).unwrap();
        assert_eq!(r.overall, 0.5);
        assert_eq!(
            r.by_stratum,
            vec![("A".into(), Some(1.0)), ("B".into(), Some(0.0))]
        );
        assert_eq!(demographic_disparity(&t, "A").unwrap(), 1.0);

        let empty = StratifiedOutcome::with_levels(
            vec!["A".into()],
            vec![1.0],
            vec!["A".into(), "Joint".into()],
        )
        .unwrap();
        assert_eq!(denial_rates(&empty).unwrap().by_stratum[1].1, None);
        assert_eq!(
            demographic_disparity(&empty, "A"),
            Err(FairnessError::UndefinedDisparity)
        );
    }

    #[test]
    fn four_row_cdd_is_zero() {
        let t = table(&[("A", -1.0), ("A", 1.0), ("B", 1.0), ("B", 1.0)]);
        assert_eq!(demographic_disparity(&t, "A").unwrap(), 2.0 / 3.0);
        assert_eq!(demographic_disparity(&t, "B").unwrap(), -2.0 / 3.0);
        assert_eq!(cdd(&t).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StratifiedOutcome::new(vec!["A".into()], vec![0.0]).is_err());
        assert!(StratifiedOutcome::new(vec!["A".into()], vec![]).is_err());
        assert!(StratifiedOutcome::new(vec![], vec![]).is_err());
    }
}
