//! File-level evaluation: pairing cases, scoring them across teams on a
//! worker pool, and assembling reports.
//!
//! Cases pair by file basename with the `.nii` / `.nii.gz` suffix removed,
//! unless an explicit manifest is supplied. Teams are sorted by name and
//! cases by id before evaluation, and results are gathered in that order, so
//! reports do not depend on argument order or worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{MetricError, NiftiError, RankingError};
use crate::metrics::{EvalOptions, PreparedReference};
use crate::nifti::read_volume_file;
use crate::ranking::{brats_scores, MetricTable};
use crate::report::{
    summarize_teams, CaseReport, ConfigEcho, RunReport, TeamReport, TOOL_NAME, TOOL_VERSION,
};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("cannot read directory {path}: {source}")]
    Directory {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("duplicate team name {0}")]
    DuplicateTeam(String),
    #[error("no teams given")]
    NoTeams,
    #[error("no common cases between the reference set and any team")]
    NoCommonCases,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Case id of a volume file: its name without `.nii` or `.nii.gz`.
pub fn case_id_from_path(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let lower = name.to_ascii_lowercase();
    for suffix in [".nii.gz", ".nii"] {
        if lower.ends_with(suffix) && name.len() > suffix.len() {
            return Some(name[..name.len() - suffix.len()].to_string());
        }
    }
    None
}

/// NIfTI files directly inside `dir`, keyed by case id.
pub fn discover_cases(dir: &Path) -> Result<BTreeMap<String, PathBuf>, BatchError> {
    let entries = fs::read_dir(dir).map_err(|source| BatchError::Directory {
        path: dir.to_path_buf(),
        source,
    })?;
    // sorted so that a duplicate id (`a.nii` next to `a.nii.gz`) resolves the same way everywhere
    let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).filter(|p| p.is_file()).collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        if let Some(id) = case_id_from_path(&path) {
            if let Some(prev) = out.insert(id.clone(), path.clone()) {
                warn!(
                    "case {id} appears twice ({} and {}); using the latter",
                    prev.display(),
                    path.display()
                );
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePlan {
    pub case_id: String,
    pub reference: PathBuf,
    /// One entry per team, `None` when the team has no file for this case.
    pub predictions: Vec<Option<PathBuf>>,
}

/// What to evaluate: teams (sorted) and cases (sorted) with file paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub teams: Vec<String>,
    pub cases: Vec<CasePlan>,
}

/// Explicit pairing file: a list of cases, each with a reference path and a
/// map from team name to prediction path. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingManifest {
    pub cases: Vec<ManifestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub case_id: String,
    pub reference: PathBuf,
    #[serde(default)]
    pub predictions: BTreeMap<String, PathBuf>,
}

impl Plan {
    pub fn from_dirs(reference_dir: &Path, teams: &[(String, PathBuf)]) -> Result<Plan, BatchError> {
        if teams.is_empty() {
            return Err(BatchError::NoTeams);
        }
        let mut sorted: Vec<(String, PathBuf)> = teams.to_vec();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in sorted.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(BatchError::DuplicateTeam(pair[0].0.clone()));
            }
        }
        let references = discover_cases(reference_dir)?;
        let team_files: Vec<BTreeMap<String, PathBuf>> = sorted
            .iter()
            .map(|(_, dir)| discover_cases(dir))
            .collect::<Result<_, _>>()?;
        let cases = references
            .into_iter()
            .map(|(case_id, reference)| CasePlan {
                predictions: team_files.iter().map(|f| f.get(&case_id).cloned()).collect(),
                case_id,
                reference,
            })
            .collect();
        Plan {
            teams: sorted.into_iter().map(|(n, _)| n).collect(),
            cases,
        }
        .checked()
    }

    pub fn from_manifest(path: &Path) -> Result<Plan, BatchError> {
        let bad = |reason: String| BatchError::Manifest {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let manifest: PairingManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

        let mut teams: Vec<String> = manifest
            .cases
            .iter()
            .flat_map(|c| c.predictions.keys().cloned())
            .collect();
        teams.sort();
        teams.dedup();
        if teams.is_empty() {
            return Err(BatchError::NoTeams);
        }
        let mut cases: Vec<CasePlan> = manifest
            .cases
            .iter()
            .map(|c| CasePlan {
                case_id: c.case_id.clone(),
                reference: resolve(&c.reference),
                predictions: teams.iter().map(|t| c.predictions.get(t).map(resolve)).collect(),
            })
            .collect();
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        for pair in cases.windows(2) {
            if pair[0].case_id == pair[1].case_id {
                return Err(bad(format!("duplicate case id {}", pair[0].case_id)));
            }
        }
        Plan { teams, cases }.checked()
    }

    fn checked(self) -> Result<Plan, BatchError> {
        let any = self
            .cases
            .iter()
            .any(|c| c.predictions.iter().any(Option::is_some));
        if !any {
            return Err(BatchError::NoCommonCases);
        }
        Ok(self)
    }
}

fn reference_error(case_id: &str, err: &NiftiError, path: &Path) -> CaseReport {
    match err {
        NiftiError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => CaseReport::failed(
            case_id,
            "reference_not_found",
            format!("reference not found: {}", path.display()),
        ),
        other => CaseReport::failed(
            case_id,
            "reference_parse",
            format!("{}: {other}", path.display()),
        ),
    }
}

fn prediction_error(case_id: &str, err: &NiftiError, path: &Path) -> CaseReport {
    match err {
        NiftiError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => CaseReport::failed(
            case_id,
            "prediction_not_found",
            format!("prediction not found: {}", path.display()),
        ),
        other => CaseReport::failed(
            case_id,
            "prediction_parse",
            format!("{}: {other}", path.display()),
        ),
    }
}

fn metric_error(case_id: &str, err: &MetricError) -> CaseReport {
    CaseReport::failed(case_id, err.kind(), err.to_string())
}

/// Score one reference file against several prediction files.
fn evaluate_against(
    case_id: &str,
    reference: &Path,
    predictions: &[Option<PathBuf>],
    options: &EvalOptions,
) -> Vec<CaseReport> {
    let prepared = read_volume_file(reference)
        .map_err(|e| reference_error(case_id, &e, reference))
        .and_then(|v| {
            PreparedReference::new(&v.binarize(), options).map_err(|e| metric_error(case_id, &e))
        });
    let prepared = match prepared {
        Ok(p) => p,
        Err(report) => return vec![report; predictions.len()],
    };
    predictions
        .iter()
        .map(|p| match p {
            None => CaseReport::failed(case_id, "prediction_not_found", "prediction not found"),
            Some(path) => match read_volume_file(path) {
                Err(e) => prediction_error(case_id, &e, path),
                Ok(v) => match prepared.score(&v.binarize()) {
                    Ok(m) => CaseReport::scored(case_id, m),
                    Err(e) => metric_error(case_id, &e),
                },
            },
        })
        .collect()
}

/// Score a single reference/prediction file pair.
pub fn evaluate_files(reference: &Path, prediction: &Path, options: &EvalOptions) -> CaseReport {
    let case_id = case_id_from_path(reference).unwrap_or_else(|| reference.display().to_string());
    if !prediction.exists() {
        return CaseReport::failed(
            case_id,
            "prediction_not_found",
            format!("prediction not found: {}", prediction.display()),
        );
    }
    evaluate_against(&case_id, reference, &[Some(prediction.to_path_buf())], options)
        .pop()
        .expect("one prediction")
}

/// Evaluate every (team, case) pair of the plan and build the run report,
/// with a leaderboard when there are at least two teams.
pub fn run(plan: &Plan, options: &EvalOptions, workers: Option<usize>) -> Result<RunReport, BatchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| BatchError::Pool(e.to_string()))?;

    let per_case: Vec<Vec<CaseReport>> = pool.install(|| {
        plan.cases
            .par_iter()
            .map(|c| evaluate_against(&c.case_id, &c.reference, &c.predictions, options))
            .collect()
    });

    let teams: Vec<TeamReport> = plan
        .teams
        .iter()
        .enumerate()
        .map(|(t, name)| TeamReport {
            team: name.clone(),
            cases: per_case.iter().map(|row| row[t].clone()).collect(),
        })
        .collect();

    let mut warnings = Vec::new();
    let leaderboard = if teams.len() >= 2 {
        let cell = |t: usize, c: usize, dsc: bool| {
            teams[t].cases[c]
                .metrics
                .as_ref()
                .map(|m| if dsc { m.lesionwise_dsc } else { m.lesionwise_hd95 })
        };
        let n_cases = plan.cases.len();
        let table = MetricTable::new(
            plan.teams.clone(),
            plan.cases.iter().map(|c| c.case_id.clone()).collect(),
            (0..teams.len()).map(|t| (0..n_cases).map(|c| cell(t, c, true)).collect()).collect(),
            (0..teams.len()).map(|t| (0..n_cases).map(|c| cell(t, c, false)).collect()).collect(),
        )?;
        let lb = brats_scores(&table)?;
        for case in &lb.excluded_cases {
            warnings.push(format!("case {case} has no scored prediction and was not ranked"));
        }
        Some(lb)
    } else {
        None
    };

    let summary_input: Vec<(String, Vec<f64>, Vec<f64>)> = teams
        .iter()
        .map(|t| {
            (
                t.team.clone(),
                t.values(crate::ranking::Metric::Dsc),
                t.values(crate::ranking::Metric::Hd95),
            )
        })
        .collect();

    Ok(RunReport {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        config: ConfigEcho::new(options),
        cases: plan.cases.iter().map(|c| c.case_id.clone()).collect(),
        summaries: summarize_teams(&summary_input),
        teams,
        leaderboard,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_ids_strip_suffixes() {
        assert_eq!(case_id_from_path(Path::new("/a/BraTS-0001.nii.gz")).as_deref(), Some("BraTS-0001"));
        assert_eq!(case_id_from_path(Path::new("x.NII")).as_deref(), Some("x"));
        assert_eq!(case_id_from_path(Path::new("notes.txt")), None);
        assert_eq!(case_id_from_path(Path::new(".nii")), None);
    }
}
