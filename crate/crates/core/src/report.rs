//! Report schemas: the canonical JSON documents and their CSV projections.
//!
//! JSON is the canonical form. The CSV projections drop per-lesion detail and
//! summaries; their column orders are fixed by [`CASE_CSV_COLUMNS`] and
//! [`RUN_CSV_COLUMNS`].

use serde::{Deserialize, Serialize};

use crate::error::RankingError;
use crate::metrics::{CaseMetrics, EvalOptions, HD_PERCENTILE};
use crate::ranking::{self, DistributionData, Leaderboard, Metric, SummaryStats};

pub const TOOL_NAME: &str = "lesioneval";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CASE_CSV_COLUMNS: [&str; 10] = [
    "case_id", "status", "dsc", "hd95", "L", "TP", "FN", "FP", "diagonal_mm", "error",
];
pub const RUN_CSV_COLUMNS: [&str; 13] = [
    "team", "case_id", "status", "dsc", "hd95", "L", "TP", "FN", "FP", "diagonal_mm", "dsc_rank",
    "hd95_rank", "case_score",
];

/// Every threshold, toggle and convention that shaped the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub min_lesion_voxels: usize,
    pub percentile: String,
    #[serde(rename = "match")]
    pub match_mode: String,
    pub hd_percentile: u32,
    pub hd_pooling: String,
    pub distance_points: String,
    pub lesion_grouping: String,
    pub ties: String,
    pub missing: String,
    pub std: String,
    pub quantiles: String,
}

impl ConfigEcho {
    pub fn new(options: &EvalOptions) -> Self {
        ConfigEcho {
            min_lesion_voxels: options.min_lesion_voxels,
            percentile: options.percentile.as_str().to_string(),
            match_mode: options.match_mode.as_str().to_string(),
            hd_percentile: HD_PERCENTILE,
            hd_pooling: "pooled both directions".to_string(),
            distance_points: "face-connected surface voxels, voxel centers".to_string(),
            lesion_grouping: "3x3x3 dilation, 26-connectivity".to_string(),
            ties: ranking::TIE_CONVENTION.to_string(),
            missing: ranking::MISSING_CONVENTION.to_string(),
            std: ranking::STD_CONVENTION.to_string(),
            quantiles: ranking::QUANTILE_CONVENTION.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseError {
    pub kind: String,
    pub message: String,
}

/// One case: either scored metrics or a typed error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CaseError>,
    #[serde(flatten)]
    pub metrics: Option<CaseMetrics>,
}

impl CaseReport {
    pub fn scored(case_id: impl Into<String>, metrics: CaseMetrics) -> Self {
        CaseReport {
            case_id: case_id.into(),
            status: CaseStatus::Ok,
            error: None,
            metrics: Some(metrics),
        }
    }

    pub fn failed(case_id: impl Into<String>, kind: &str, message: impl Into<String>) -> Self {
        CaseReport {
            case_id: case_id.into(),
            status: CaseStatus::Error,
            error: Some(CaseError {
                kind: kind.to_string(),
                message: message.into(),
            }),
            metrics: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CaseStatus::Ok
    }

    fn csv_cells(&self) -> Vec<String> {
        let num = |f: fn(&CaseMetrics) -> String| self.metrics.as_ref().map(f).unwrap_or_default();
        vec![
            self.case_id.clone(),
            match self.status {
                CaseStatus::Ok => "ok".into(),
                CaseStatus::Error => "error".into(),
            },
            num(|m| m.lesionwise_dsc.to_string()),
            num(|m| m.lesionwise_hd95.to_string()),
            num(|m| m.lesions.to_string()),
            num(|m| m.tp.to_string()),
            num(|m| m.fn_.to_string()),
            num(|m| m.fp.to_string()),
            num(|m| m.diagonal_mm.to_string()),
        ]
    }
}

/// Output of a single-case evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
    #[serde(flatten)]
    pub case: CaseReport,
}

impl EvaluateReport {
    pub fn new(options: &EvalOptions, case: CaseReport) -> Self {
        EvaluateReport {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config: ConfigEcho::new(options),
            case,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CASE_CSV_COLUMNS).unwrap();
        let mut cells = self.case.csv_cells();
        cells.push(self.case.error.as_ref().map(|e| e.kind.clone()).unwrap_or_default());
        w.write_record(&cells).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Summary of one team (or all teams pooled) on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub team: String,
    pub metric: Metric,
    pub stats: SummaryStats,
    /// `mean ± std (median)`.
    pub display: String,
}

/// Label of the pooled all-teams rows.
pub const ALL_TEAMS: &str = "(all)";

fn decimals(metric: Metric) -> usize {
    match metric {
        Metric::Dsc => 3,
        Metric::Hd95 => 2,
    }
}

impl SummaryRow {
    pub fn new(team: &str, metric: Metric, values: &[f64]) -> Result<Self, RankingError> {
        let stats = ranking::summary_stats(values)?;
        Ok(SummaryRow {
            team: team.to_string(),
            metric,
            display: stats.render(decimals(metric)),
            stats,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamReport {
    pub team: String,
    pub cases: Vec<CaseReport>,
}

impl TeamReport {
    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.cases
            .iter()
            .filter_map(|c| c.metrics.as_ref())
            .map(|m| match metric {
                Metric::Dsc => m.lesionwise_dsc,
                Metric::Hd95 => m.lesionwise_hd95,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
    pub cases: Vec<String>,
    pub teams: Vec<TeamReport>,
    pub summaries: Vec<SummaryRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaderboard: Option<Leaderboard>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn case_error_count(&self) -> usize {
        self.teams
            .iter()
            .flat_map(|t| &t.cases)
            .filter(|c| !c.is_ok())
            .count()
    }

    /// Long-format CSV, one row per (team, case). Ranks are empty for cases
    /// that were not ranked.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RUN_CSV_COLUMNS).unwrap();
        for (t, team) in self.teams.iter().enumerate() {
            for case in &team.cases {
                let mut cells = vec![team.team.clone()];
                cells.extend(case.csv_cells());
                let ranks = self.leaderboard.as_ref().and_then(|lb| {
                    let k = lb.ranked_cases.iter().position(|c| *c == case.case_id)?;
                    Some((lb.dsc_ranks[t][k], lb.hd95_ranks[t][k]))
                });
                match ranks {
                    Some((d, h)) => {
                        cells.push(d.to_string());
                        cells.push(h.to_string());
                        cells.push((d + h).to_string());
                    }
                    None => cells.extend([String::new(), String::new(), String::new()]),
                }
                w.write_record(&cells).unwrap();
            }
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn distribution(&self) -> DistributionData {
        let mut groups = Vec::new();
        for metric in [Metric::Dsc, Metric::Hd95] {
            for team in &self.teams {
                let (cases, values) = team
                    .cases
                    .iter()
                    .filter_map(|c| {
                        let m = c.metrics.as_ref()?;
                        let v = match metric {
                            Metric::Dsc => m.lesionwise_dsc,
                            Metric::Hd95 => m.lesionwise_hd95,
                        };
                        Some((c.case_id.clone(), v))
                    })
                    .unzip();
                groups.push(ranking::DistributionGroup {
                    team: team.team.clone(),
                    metric,
                    cases,
                    values,
                });
            }
        }
        DistributionData { groups }
    }
}

/// Per-team and pooled summaries for every metric with at least one value.
pub fn summarize_teams(teams: &[(String, Vec<f64>, Vec<f64>)]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for metric in [Metric::Dsc, Metric::Hd95] {
        let pick = |t: &(String, Vec<f64>, Vec<f64>)| match metric {
            Metric::Dsc => t.1.clone(),
            Metric::Hd95 => t.2.clone(),
        };
        let mut pooled = Vec::new();
        for t in teams {
            let values = pick(t);
            if let Ok(row) = SummaryRow::new(&t.0, metric, &values) {
                rows.push(row);
            }
            pooled.extend(values);
        }
        if teams.len() > 1 {
            if let Ok(row) = SummaryRow::new(ALL_TEAMS, metric, &pooled) {
                rows.push(row);
            }
        }
    }
    rows
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("not valid JSON")]
    Json(#[from] serde_json::Error),
    #[error("not valid distribution CSV")]
    Csv(#[from] csv::Error),
    #[error("unrecognized report: expected a run report, a case report or distribution data")]
    Unrecognized,
}

/// Summaries from any report this crate emits: a run report, a single-case
/// report, or distribution data (JSON or CSV).
pub fn summarize_report(text: &str) -> Result<Vec<SummaryRow>, SummarizeError> {
    if text.starts_with("team,metric,case_id,value") {
        return Ok(summarize_distribution(&DistributionData::from_csv(text)?));
    }
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or(SummarizeError::Unrecognized)?;
    let teams: Vec<(String, Vec<f64>, Vec<f64>)> = if obj.contains_key("teams") {
        let run: RunReport = serde_json::from_value(value)?;
        run.teams
            .iter()
            .map(|t| (t.team.clone(), t.values(Metric::Dsc), t.values(Metric::Hd95)))
            .collect()
    } else if obj.contains_key("groups") {
        let dist: DistributionData = serde_json::from_value(value)?;
        return Ok(summarize_distribution(&dist));
    } else if obj.contains_key("case_id") {
        let case: EvaluateReport = serde_json::from_value(value)?;
        let team = TeamReport {
            team: case.case.case_id.clone(),
            cases: vec![case.case],
        };
        vec![(team.team.clone(), team.values(Metric::Dsc), team.values(Metric::Hd95))]
    } else {
        return Err(SummarizeError::Unrecognized);
    };
    Ok(summarize_teams(&teams))
}

fn summarize_distribution(dist: &DistributionData) -> Vec<SummaryRow> {
    let mut names: Vec<&str> = Vec::new();
    for g in &dist.groups {
        if !names.contains(&g.team.as_str()) {
            names.push(&g.team);
        }
    }
    let teams: Vec<(String, Vec<f64>, Vec<f64>)> = names
        .into_iter()
        .map(|name| {
            let get = |metric| {
                dist.groups
                    .iter()
                    .filter(|g| g.team == name && g.metric == metric)
                    .flat_map(|g| g.values.iter().copied())
                    .collect::<Vec<f64>>()
            };
            (name.to_string(), get(Metric::Dsc), get(Metric::Hd95))
        })
        .collect();
    summarize_teams(&teams)
}

/// Plain-text table of summary rows.
pub fn render_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:<6} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}  {}\n",
        "team", "metric", "n", "mean", "std", "median", "q1", "q3", "mean ± std (median)"
    ));
    for r in rows {
        let d = decimals(r.metric);
        out.push_str(&format!(
            "{:<16} {:<6} {:>5} {:>12.d$} {:>12.d$} {:>12.d$} {:>12.d$} {:>12.d$}  {}\n",
            r.team,
            r.metric.as_str(),
            r.stats.n,
            r.stats.mean,
            r.stats.std,
            r.stats.median,
            r.stats.q1,
            r.stats.q3,
            r.display,
            d = d
        ));
    }
    out
}

/// Plain-text standings table.
pub fn render_standings(lb: &Leaderboard) -> String {
    let mut out = format!("{:>4}  {:<16} {}\n", "rank", "team", "BraTS score (mean ± std)");
    for s in &lb.standings {
        out.push_str(&format!(
            "{:>4}  {:<16} {:.2} ± {:.2}\n",
            s.final_rank, s.team, s.brats_mean, s.brats_std
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Classification, LesionScore};

    fn metrics() -> CaseMetrics {
        CaseMetrics {
            lesionwise_dsc: 0.5,
            lesionwise_hd95: 8.5,
            lesions: 2,
            tp: 1,
            fn_: 1,
            fp: 0,
            diagonal_mm: 17.0,
            per_lesion: vec![LesionScore {
                lesion_id: 1,
                classification: Classification::TP,
                reference_voxels: 60,
                matched_prediction_ids: vec![1],
                dice: 1.0,
                hd95: 0.0,
            }],
        }
    }

    #[test]
    fn case_json_has_schema_fields() {
        let r = EvaluateReport::new(&EvalOptions::default(), CaseReport::scored("c1", metrics()));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["case_id", "dsc", "hd95", "L", "TP", "FN", "FP", "diagonal_mm", "per_lesion", "config"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["config"]["min_lesion_voxels"], 50);
        assert_eq!(v["config"]["percentile"], "interp");
        assert_eq!(v["config"]["match"], "undilated");
        let back: EvaluateReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn failed_case_round_trips_without_metrics() {
        let r = EvaluateReport::new(
            &EvalOptions::default(),
            CaseReport::failed("c2", "prediction_not_found", "prediction not found: x.nii"),
        );
        let text = serde_json::to_string(&r).unwrap();
        assert!(!text.contains("\"dsc\""));
        let back: EvaluateReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().ends_with("c2,error,,,,,,,,prediction_not_found\n"));
    }

    #[test]
    fn summarize_single_case_reproduces_values() {
        let r = EvaluateReport::new(&EvalOptions::default(), CaseReport::scored("c1", metrics()));
        let rows = summarize_report(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].stats.mean, 0.5);
        assert_eq!(rows[0].stats.median, 0.5);
        assert_eq!(rows[1].stats.mean, 8.5);
        assert!(summarize_report("[1,2]").is_err());
    }
}
