//! Two-way repeated-measures ANOVA, F-distribution tail probabilities and
//! standard errors.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample standard deviation (n - 1 denominator) divided by `sqrt(n)`.
pub fn sem(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((var / n as f64).sqrt())
}

/// Upper tail `P(F' > f)` of the F distribution with `(df1, df2)` degrees of
/// freedom, via the regularized incomplete beta function.
pub fn f_distribution_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1.is_finite() && df2.is_finite() && df1 > 0.0 && df2 > 0.0) {
        return Err(Error::InvalidDegreesOfFreedom { df1, df2 });
    }
    if f.is_nan() || f < 0.0 {
        return Err(Error::InvalidParameter(format!("F must be >= 0, got {f}")));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let x = df2 / (df2 + df1 * f);
    Ok(statrs::function::beta::beta_reg(df2 / 2.0, df1 / 2.0, x).clamp(0.0, 1.0))
}

/// Balanced two-factor within-subject design: exactly one value per
/// (subject, level of A, level of B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmDesign {
    subjects: Vec<String>,
    a_levels: Vec<String>,
    b_levels: Vec<String>,
    /// `values[(s * n_a + a) * n_b + b]`
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub subject: String,
    pub a: String,
    pub b: String,
    pub value: f64,
}

impl RmDesign {
    pub fn new(
        subjects: Vec<String>,
        a_levels: Vec<String>,
        b_levels: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = subjects.len() * a_levels.len() * b_levels.len();
        if values.len() != expected {
            return Err(Error::UnbalancedDesign(format!(
                "{} values for {expected} cells",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::UnbalancedDesign("non-finite cell value".into()));
        }
        if a_levels.len() < 2 || b_levels.len() < 2 {
            return Err(Error::UnbalancedDesign(
                "each factor needs at least two levels".into(),
            ));
        }
        Ok(Self {
            subjects,
            a_levels,
            b_levels,
            values,
        })
    }

    /// Build from long-format records. Every (subject, a, b) cell must appear
    /// exactly once.
    pub fn from_records(
        records: &[CellValue],
        a_levels: &[String],
        b_levels: &[String],
    ) -> Result<Self> {
        let subjects = distinct_subjects(records);
        let (n_a, n_b) = (a_levels.len(), b_levels.len());
        let mut values = vec![None; subjects.len() * n_a * n_b];
        for r in records {
            let s = subjects.iter().position(|x| *x == r.subject).unwrap();
            let a = a_levels.iter().position(|x| *x == r.a).ok_or_else(|| {
                Error::UnbalancedDesign(format!("unknown level {} of factor A", r.a))
            })?;
            let b = b_levels.iter().position(|x| *x == r.b).ok_or_else(|| {
                Error::UnbalancedDesign(format!("unknown level {} of factor B", r.b))
            })?;
            let slot = &mut values[(s * n_a + a) * n_b + b];
            if slot.is_some() {
                return Err(Error::UnbalancedDesign(format!(
                    "duplicate cell ({}, {}, {})",
                    r.subject, r.a, r.b
                )));
            }
            *slot = Some(r.value);
        }
        if let Some(i) = values.iter().position(Option::is_none) {
            let s = i / (n_a * n_b);
            let a = (i / n_b) % n_a;
            let b = i % n_b;
            return Err(Error::UnbalancedDesign(format!(
                "missing cell ({}, {}, {})",
                subjects[s], a_levels[a], b_levels[b]
            )));
        }
        Self::new(
            subjects,
            a_levels.to_vec(),
            b_levels.to_vec(),
            values.into_iter().map(Option::unwrap).collect(),
        )
    }

    /// Like [`RmDesign::from_records`] but drops subjects with any missing or
    /// non-finite cell. Returns the design and the dropped subjects.
    pub fn from_records_listwise(
        records: &[CellValue],
        a_levels: &[String],
        b_levels: &[String],
    ) -> Result<(Self, Vec<String>)> {
        let needed = a_levels.len() * b_levels.len();
        let mut dropped = Vec::new();
        let mut kept = Vec::new();
        for subject in distinct_subjects(records) {
            let cells: Vec<&CellValue> = records
                .iter()
                .filter(|r| r.subject == subject && r.value.is_finite())
                .collect();
            let complete = a_levels.iter().all(|a| {
                b_levels
                    .iter()
                    .all(|b| cells.iter().filter(|c| &c.a == a && &c.b == b).count() == 1)
            });
            if complete && cells.len() == needed {
                kept.extend(cells.into_iter().cloned());
            } else {
                log::warn!("dropping subject {subject}: incomplete repeated-measures cells");
                dropped.push(subject);
            }
        }
        Ok((Self::from_records(&kept, a_levels, b_levels)?, dropped))
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn a_levels(&self) -> &[String] {
        &self.a_levels
    }

    pub fn b_levels(&self) -> &[String] {
        &self.b_levels
    }

    pub fn value(&self, s: usize, a: usize, b: usize) -> f64 {
        self.values[(s * self.a_levels.len() + a) * self.b_levels.len() + b]
    }
}

fn distinct_subjects(records: &[CellValue]) -> Vec<String> {
    let mut subjects: Vec<String> = Vec::new();
    for r in records {
        if !subjects.contains(&r.subject) {
            subjects.push(r.subject.clone());
        }
    }
    subjects
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    A,
    B,
    AxB,
}

impl Effect {
    pub fn label(self) -> &'static str {
        match self {
            Effect::A => "A",
            Effect::B => "B",
            Effect::AxB => "AxB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectResult {
    pub effect: Effect,
    pub ss_effect: f64,
    pub ss_error: f64,
    pub df_effect: f64,
    pub df_error: f64,
    pub f: f64,
    pub p: f64,
    pub partial_eta_sq: f64,
    /// Greenhouse-Geisser epsilon and corrected p, when requested.
    pub gg_epsilon: Option<f64>,
    pub p_gg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub effects: Vec<EffectResult>,
    pub ss_total: f64,
    pub ss_subjects: f64,
    pub n_subjects: usize,
}

impl AnovaResult {
    pub fn effect(&self, effect: Effect) -> &EffectResult {
        self.effects.iter().find(|e| e.effect == effect).unwrap()
    }

    /// Sum of every component sum of squares, including subjects.
    pub fn ss_components(&self) -> f64 {
        self.ss_subjects
            + self
                .effects
                .iter()
                .map(|e| e.ss_effect + e.ss_error)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnovaOptions {
    pub greenhouse_geisser: bool,
}

pub fn rm_anova_two_way(design: &RmDesign) -> Result<AnovaResult> {
    rm_anova_two_way_with(design, AnovaOptions::default())
}

pub fn rm_anova_two_way_with(design: &RmDesign, options: AnovaOptions) -> Result<AnovaResult> {
    let (n_s, n_a, n_b) = (
        design.subjects.len(),
        design.a_levels.len(),
        design.b_levels.len(),
    );
    if n_s < 2 {
        return Err(Error::TooFewSubjects(n_s));
    }
    let y = |s, a, b| design.value(s, a, b);
    let n_total = (n_s * n_a * n_b) as f64;
    let grand = design.values.iter().sum::<f64>() / n_total;

    let mean_over = |pred: &dyn Fn(usize, usize, usize) -> bool, count: usize| -> f64 {
        let mut acc = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                for b in 0..n_b {
                    if pred(s, a, b) {
                        acc += y(s, a, b);
                    }
                }
            }
        }
        acc / count as f64
    };
    let m_s: Vec<f64> = (0..n_s)
        .map(|i| mean_over(&|s, _, _| s == i, n_a * n_b))
        .collect();
    let m_a: Vec<f64> = (0..n_a)
        .map(|i| mean_over(&|_, a, _| a == i, n_s * n_b))
        .collect();
    let m_b: Vec<f64> = (0..n_b)
        .map(|i| mean_over(&|_, _, b| b == i, n_s * n_a))
        .collect();
    let m_sa: Vec<f64> = (0..n_s * n_a)
        .map(|i| mean_over(&|s, a, _| s * n_a + a == i, n_b))
        .collect();
    let m_sb: Vec<f64> = (0..n_s * n_b)
        .map(|i| mean_over(&|s, _, b| s * n_b + b == i, n_a))
        .collect();
    let m_ab: Vec<f64> = (0..n_a * n_b)
        .map(|i| mean_over(&|_, a, b| a * n_b + b == i, n_s))
        .collect();

    let sq = |v: f64| v * v;
    let ss_total: f64 = design.values.iter().map(|&v| sq(v - grand)).sum();
    let ss_s = (n_a * n_b) as f64 * m_s.iter().map(|&m| sq(m - grand)).sum::<f64>();
    let ss_a = (n_s * n_b) as f64 * m_a.iter().map(|&m| sq(m - grand)).sum::<f64>();
    let ss_b = (n_s * n_a) as f64 * m_b.iter().map(|&m| sq(m - grand)).sum::<f64>();
    let mut ss_ab = 0.0;
    for a in 0..n_a {
        for b in 0..n_b {
            ss_ab += sq(m_ab[a * n_b + b] - m_a[a] - m_b[b] + grand);
        }
    }
    ss_ab *= n_s as f64;
    let (mut ss_as, mut ss_bs, mut ss_abs) = (0.0, 0.0, 0.0);
    for s in 0..n_s {
        for a in 0..n_a {
            ss_as += sq(m_sa[s * n_a + a] - m_s[s] - m_a[a] + grand);
        }
        for b in 0..n_b {
            ss_bs += sq(m_sb[s * n_b + b] - m_s[s] - m_b[b] + grand);
        }
        for a in 0..n_a {
            for b in 0..n_b {
                ss_abs += sq(y(s, a, b) - m_sa[s * n_a + a] - m_sb[s * n_b + b]
                    + m_s[s]
                    - m_ab[a * n_b + b]
                    + m_a[a]
                    + m_b[b]
                    - grand);
            }
        }
    }
    ss_as *= n_b as f64;
    ss_bs *= n_a as f64;

    let df_s = (n_s - 1) as f64;
    let df_a = (n_a - 1) as f64;
    let df_b = (n_b - 1) as f64;

    let effects = [
        (Effect::A, ss_a, ss_as, df_a, df_a * df_s),
        (Effect::B, ss_b, ss_bs, df_b, df_b * df_s),
        (Effect::AxB, ss_ab, ss_abs, df_a * df_b, df_a * df_b * df_s),
    ]
    .into_iter()
    .map(|(effect, ss_effect, ss_error, df_effect, df_error)| {
        let f = f_ratio(ss_effect, ss_error, df_effect, df_error);
        let p = f_distribution_sf(f, df_effect, df_error)?;
        let denom = ss_effect + ss_error;
        let partial_eta_sq = if denom > 0.0 { ss_effect / denom } else { 0.0 };
        let (gg_epsilon, p_gg) = if options.greenhouse_geisser {
            let eps = greenhouse_geisser_epsilon(design, effect);
            let p = f_distribution_sf(f, df_effect * eps, df_error * eps)?;
            (Some(eps), Some(p))
        } else {
            (None, None)
        };
        Ok(EffectResult {
            effect,
            ss_effect,
            ss_error,
            df_effect,
            df_error,
            f,
            p,
            partial_eta_sq,
            gg_epsilon,
            p_gg,
        })
    })
    .collect::<Result<Vec<_>>>()?;

    Ok(AnovaResult {
        effects,
        ss_total,
        ss_subjects: ss_s,
        n_subjects: n_s,
    })
}

/// Sums of squares below this fraction of the total are treated as exact zeros.
const SS_ROUNDOFF: f64 = 1e-12;

fn f_ratio(ss_effect: f64, ss_error: f64, df_effect: f64, df_error: f64) -> f64 {
    let scale = (ss_effect + ss_error).max(f64::MIN_POSITIVE);
    if ss_effect <= SS_ROUNDOFF * scale || ss_effect == 0.0 {
        return 0.0;
    }
    if ss_error <= SS_ROUNDOFF * scale {
        return f64::INFINITY;
    }
    (ss_effect / df_effect) / (ss_error / df_error)
}

/// Orthonormal Helmert contrasts, `k x (k - 1)`.
fn helmert(k: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(k, k - 1);
    for j in 0..k - 1 {
        let norm = (((j + 1) * (j + 2)) as f64).sqrt();
        for i in 0..=j {
            c[(i, j)] = 1.0 / norm;
        }
        c[(j + 1, j)] = -((j + 1) as f64) / norm;
    }
    c
}

/// Greenhouse-Geisser sphericity estimate for one within-subject effect.
fn greenhouse_geisser_epsilon(design: &RmDesign, effect: Effect) -> f64 {
    let (n_s, n_a, n_b) = (
        design.subjects.len(),
        design.a_levels.len(),
        design.b_levels.len(),
    );
    // Per-subject level vectors and matching contrasts.
    let (levels, contrast) = match effect {
        Effect::A => {
            let m = DMatrix::from_fn(n_s, n_a, |s, a| {
                (0..n_b).map(|b| design.value(s, a, b)).sum::<f64>() / n_b as f64
            });
            (m, helmert(n_a))
        }
        Effect::B => {
            let m = DMatrix::from_fn(n_s, n_b, |s, b| {
                (0..n_a).map(|a| design.value(s, a, b)).sum::<f64>() / n_a as f64
            });
            (m, helmert(n_b))
        }
        Effect::AxB => {
            let m = DMatrix::from_fn(n_s, n_a * n_b, |s, ab| {
                design.value(s, ab / n_b, ab % n_b)
            });
            (m, helmert(n_a).kronecker(&helmert(n_b)))
        }
    };
    let k = contrast.ncols() as f64;
    if k <= 1.0 {
        return 1.0;
    }
    let transformed = &levels * &contrast;
    let mean = transformed.row_mean();
    let centered = DMatrix::from_fn(transformed.nrows(), transformed.ncols(), |i, j| {
        transformed[(i, j)] - mean[j]
    });
    let cov = centered.transpose() * &centered / (n_s as f64 - 1.0);
    let tr = cov.trace();
    let tr_sq = (&cov * &cov).trace();
    if tr_sq <= 0.0 {
        return 1.0;
    }
    (tr * tr / (k * tr_sq)).clamp(1.0 / k, 1.0)
}

/// Rows of `region,effect,F,df1,df2,p,partial_eta_sq`.
pub fn anova_csv(rows: &[(String, AnovaResult)], effect_names: [&str; 3]) -> String {
    let mut out = String::from("region,effect,F,df1,df2,p,partial_eta_sq\n");
    for (region, result) in rows {
        for e in &result.effects {
            let name = match e.effect {
                Effect::A => effect_names[0],
                Effect::B => effect_names[1],
                Effect::AxB => effect_names[2],
            };
            let _ = writeln!(
                out,
                "{region},{name},{},{},{},{},{}",
                e.f, e.df_effect, e.df_error, e.p, e.partial_eta_sq
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((sem(&[1.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(sem(&[1.0]), Err(Error::TooFewValues(1))));
        let v = [0.3, 1.7, -2.0, 4.5];
        let scaled: Vec<f64> = v.iter().map(|x| -3.0 * x).collect();
        assert!((sem(&scaled).unwrap() - 3.0 * sem(&v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn f_sf_boundaries() {
        assert_eq!(f_distribution_sf(0.0, 3.0, 7.0).unwrap(), 1.0);
        for df in [1.0, 2.0, 5.0, 30.0] {
            assert!((f_distribution_sf(1.0, df, df).unwrap() - 0.5).abs() < 1e-9);
        }
        // df1 = 2 has the closed form (1 + 2F/df2)^(-df2/2).
        let p = f_distribution_sf(4.0, 2.0, 10.0).unwrap();
        assert!((p - 1.8f64.powf(-5.0)).abs() < 1e-12);
        assert!(matches!(
            f_distribution_sf(1.0, 0.0, 3.0),
            Err(Error::InvalidDegreesOfFreedom { .. })
        ));
    }

    #[test]
    fn helmert_columns_are_orthonormal_contrasts() {
        let c = helmert(4);
        let g = c.transpose() * &c;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12);
            }
            assert!(c.column(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn design_validation() {
        let lv = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let rec = |s: &str, a: &str, b: &str, v: f64| CellValue {
            subject: s.into(),
            a: a.into(),
            b: b.into(),
            value: v,
        };
        let (a, b) = (lv(&["x", "y"]), lv(&["p", "q"]));
        let mut records = vec![];
        for s in ["s1", "s2"] {
            for ai in &a {
                for bi in &b {
                    records.push(rec(s, ai, bi, 1.0));
                }
            }
        }
        assert!(RmDesign::from_records(&records, &a, &b).is_ok());
        let missing = &records[..7];
        assert!(matches!(
            RmDesign::from_records(missing, &a, &b),
            Err(Error::UnbalancedDesign(_))
        ));
        let (d, dropped) = RmDesign::from_records_listwise(missing, &a, &b).unwrap();
        assert_eq!(dropped, vec!["s2".to_string()]);
        assert_eq!(d.subjects().len(), 1);
        assert!(matches!(
            rm_anova_two_way(&d),
            Err(Error::TooFewSubjects(1))
        ));
    }
}
