//! Published reference statistics for the interactive-dialogue corpus, and
//! tables setting measured values beside them. The comparison carries the
//! protocol used here so differences in design stay visible.

use std::fmt::Write as _;

use emocouple::coupling::{AffectBin, CellKey, CouplingReport, FeatureSet};
use emocouple::stats::{AnovaResult, Effect};
use emocouple::timeline::Condition;

/// A reported ANOVA effect for one region.
pub struct AnovaRef {
    pub region: &'static str,
    pub effect: Effect,
    pub f: f64,
    pub df1: Option<f64>,
    pub df2: Option<f64>,
    /// Reported as a bound (`p < .001`) or a value.
    pub p: &'static str,
    pub partial_eta_sq: Option<f64>,
}

pub const ANOVA_REFERENCE: &[AnovaRef] = &[
    AnovaRef { region: "mouth", effect: Effect::B, f: 229.49, df1: Some(1.0), df2: Some(132.0), p: "<.001", partial_eta_sq: Some(0.258) },
    AnovaRef { region: "lower_face", effect: Effect::B, f: 217.92, df1: None, df2: None, p: "<.001", partial_eta_sq: Some(0.249) },
    AnovaRef { region: "middle_face", effect: Effect::B, f: 175.29, df1: None, df2: None, p: "<.001", partial_eta_sq: Some(0.203) },
    AnovaRef { region: "lower_face", effect: Effect::A, f: 76.75, df1: None, df2: None, p: "<.001", partial_eta_sq: Some(0.133) },
    AnovaRef { region: "mouth", effect: Effect::A, f: 71.27, df1: None, df2: None, p: "<.001", partial_eta_sq: Some(0.126) },
    AnovaRef { region: "mouth", effect: Effect::AxB, f: 2.77, df1: None, df2: None, p: ".041", partial_eta_sq: None },
    AnovaRef { region: "lower_face", effect: Effect::AxB, f: 2.97, df1: None, df2: None, p: ".032", partial_eta_sq: None },
    AnovaRef { region: "hands", effect: Effect::AxB, f: 4.42, df1: None, df2: None, p: ".004", partial_eta_sq: None },
];

/// A reported mean correlation over all speaking frames.
pub struct CouplingRef {
    pub region: &'static str,
    pub feature_set: FeatureSet,
    pub r: f64,
    pub sem: Option<f64>,
}

pub const COUPLING_REFERENCE: &[CouplingRef] = &[
    CouplingRef { region: "total_face", feature_set: FeatureSet::Prosody, r: 0.47, sem: Some(0.006) },
    CouplingRef { region: "total_face", feature_set: FeatureSet::Mfcc, r: 0.44, sem: Some(0.006) },
    CouplingRef { region: "lower_face", feature_set: FeatureSet::Prosody, r: 0.46, sem: None },
    CouplingRef { region: "mouth", feature_set: FeatureSet::Prosody, r: 0.46, sem: None },
    CouplingRef { region: "lower_face", feature_set: FeatureSet::Mfcc, r: 0.44, sem: None },
    CouplingRef { region: "mouth", feature_set: FeatureSet::Mfcc, r: 0.43, sem: None },
    CouplingRef { region: "middle_face", feature_set: FeatureSet::Prosody, r: 0.41, sem: None },
    CouplingRef { region: "middle_face", feature_set: FeatureSet::Mfcc, r: 0.39, sem: None },
    CouplingRef { region: "hands", feature_set: FeatureSet::Mfcc, r: 0.35, sem: None },
    CouplingRef { region: "head", feature_set: FeatureSet::Prosody, r: 0.34, sem: None },
    CouplingRef { region: "mouth", feature_set: FeatureSet::Arousal, r: 0.33, sem: None },
    CouplingRef { region: "lower_face", feature_set: FeatureSet::Valence, r: 0.31, sem: None },
];

fn effect_name(e: Effect) -> &'static str {
    match e {
        Effect::A => crate::pipeline::ANOVA_EFFECTS[0],
        Effect::B => crate::pipeline::ANOVA_EFFECTS[1],
        Effect::AxB => crate::pipeline::ANOVA_EFFECTS[2],
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const ANOVA_PROTOCOL: &str =
    "two-way repeated measures (emotion x condition) on frame-weighted subject cell means";

pub fn anova_comparison(results: &[(String, AnovaResult)]) -> String {
    let mut out = String::from(
        "region,effect,reference_F,reference_df1,reference_df2,reference_p,reference_partial_eta_sq,\
         measured_F,measured_df1,measured_df2,measured_p,measured_partial_eta_sq,protocol\n",
    );
    for r in ANOVA_REFERENCE {
        let measured = results
            .iter()
            .find(|(region, _)| region == r.region)
            .map(|(_, res)| res.effect(r.effect));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.region,
            effect_name(r.effect),
            r.f,
            opt(r.df1),
            opt(r.df2),
            r.p,
            opt(r.partial_eta_sq),
            opt(measured.map(|e| e.f)),
            opt(measured.map(|e| e.df_effect)),
            opt(measured.map(|e| e.df_error)),
            opt(measured.map(|e| e.p)),
            opt(measured.map(|e| e.partial_eta_sq)),
            ANOVA_PROTOCOL
        );
    }
    out
}

pub fn coupling_comparison(report: &CouplingReport) -> String {
    let mut out = String::from(
        "region,feature_set,condition,reference_r,reference_sem,measured_r,measured_sem,n_dyads,protocol\n",
    );
    for r in COUPLING_REFERENCE {
        let key = CellKey {
            region: r.region.into(),
            feature_set: r.feature_set,
            condition: Condition::All,
            affect_dimension: None,
            affect_bin: AffectBin::All,
        };
        let row = report.row(&key);
        let _ = writeln!(
            out,
            "{},{},all,{},{},{},{},{},{}",
            r.region,
            r.feature_set.name(),
            r.r,
            opt(r.sem),
            opt(row.and_then(|x| x.mean_r)),
            opt(row.and_then(|x| x.sem)),
            row.map(|x| x.n_dyads).unwrap_or(0),
            report.protocol
        );
    }
    out
}
