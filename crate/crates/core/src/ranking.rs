//! Per-case ranks, composite team scores and summary statistics.
//!
//! Conventions, all fixed here and echoed in reports:
//! - ties share the average of the positions they occupy;
//! - a team without a value for a case takes the worst position(s) for both
//!   metrics, shared fractionally if several teams are missing;
//! - standard deviations use the `n - 1` denominator (0 for a single value);
//! - quartiles interpolate linearly between order statistics at `q * (n - 1)`.

use std::cmp::Ordering;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::RankingError;

pub const TIE_CONVENTION: &str = "fractional";
pub const MISSING_CONVENTION: &str = "worst-rank";
pub const STD_CONVENTION: &str = "sample (n-1)";
pub const QUANTILE_CONVENTION: &str = "linear (inclusive)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Direction {
    /// `Less` when `a` is better than `b`.
    fn compare(self, a: f64, b: f64) -> Ordering {
        match self {
            Direction::HigherBetter => b.total_cmp(&a),
            Direction::LowerBetter => a.total_cmp(&b),
        }
    }
}

/// Ranks of one case's values, 1 = best. `None` entries are missing. Returns
/// `None` when every value is missing.
pub fn per_case_ranks(values: &[Option<f64>], direction: Direction) -> Option<Vec<f64>> {
    let present: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| !x.is_nan()).map(|x| (i, x)))
        .collect();
    if present.is_empty() {
        return None;
    }
    let t = values.len();
    let m = present.len();
    let missing_rank = (m + 1 + t) as f64 / 2.0;
    let mut ranks = vec![missing_rank; t];

    let mut order = present.clone();
    order.sort_by(|a, b| direction.compare(a.1, b.1));
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && direction.compare(order[start].1, order[end].1) == Ordering::Equal {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &(team, _) in &order[start..end] {
            ranks[team] = rank;
        }
        start = end;
    }
    Some(ranks)
}

/// Teams × cases table of per-case metric values; `None` marks a missing
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    teams: Vec<String>,
    cases: Vec<String>,
    dsc: Vec<Vec<Option<f64>>>,
    hd95: Vec<Vec<Option<f64>>>,
}

impl MetricTable {
    pub fn new(
        teams: Vec<String>,
        cases: Vec<String>,
        dsc: Vec<Vec<Option<f64>>>,
        hd95: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, RankingError> {
        if dsc.len() != teams.len() || hd95.len() != teams.len() {
            return Err(RankingError::Shape(format!(
                "{} teams but {} dsc rows and {} hd95 rows",
                teams.len(),
                dsc.len(),
                hd95.len()
            )));
        }
        for (t, team) in teams.iter().enumerate() {
            if dsc[t].len() != cases.len() || hd95[t].len() != cases.len() {
                return Err(RankingError::Shape(format!(
                    "team {team} has {} dsc and {} hd95 entries for {} cases",
                    dsc[t].len(),
                    hd95[t].len(),
                    cases.len()
                )));
            }
            for (c, case) in cases.iter().enumerate() {
                let bad = |reason| RankingError::InvalidValue {
                    team: team.clone(),
                    case: case.clone(),
                    reason,
                };
                if let Some(v) = dsc[t][c] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad("dsc outside [0, 1]"));
                    }
                }
                if let Some(v) = hd95[t][c] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(bad("hd95 negative or not finite"));
                    }
                }
            }
        }
        Ok(MetricTable {
            teams,
            cases,
            dsc,
            hd95,
        })
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn dsc(&self, team: usize, case: usize) -> Option<f64> {
        self.dsc[team][case]
    }

    pub fn hd95(&self, team: usize, case: usize) -> Option<f64> {
        self.hd95[team][case]
    }

    fn column(rows: &[Vec<Option<f64>>], case: usize) -> Vec<Option<f64>> {
        rows.iter().map(|r| r[case]).collect()
    }

    /// Present values of one team for one metric, in case order.
    pub fn present(&self, team: usize, metric: Metric) -> Vec<f64> {
        let rows = match metric {
            Metric::Dsc => &self.dsc,
            Metric::Hd95 => &self.hd95,
        };
        rows[team].iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dsc,
    Hd95,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Dsc => "dsc",
            Metric::Hd95 => "hd95",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamStanding {
    pub team: String,
    pub final_rank: usize,
    pub brats_mean: f64,
    pub brats_std: f64,
    /// Per ranked case: dsc rank + hd95 rank.
    pub case_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    /// Best first.
    pub standings: Vec<TeamStanding>,
    /// Cases that entered the ranking, in table order.
    pub ranked_cases: Vec<String>,
    /// Cases with no value from any team.
    pub excluded_cases: Vec<String>,
    /// `[team][ranked case]`, teams in table order.
    pub dsc_ranks: Vec<Vec<f64>>,
    pub hd95_ranks: Vec<Vec<f64>>,
}

impl Leaderboard {
    pub fn standing(&self, team: &str) -> Option<&TeamStanding> {
        self.standings.iter().find(|s| s.team == team)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn brats_scores(table: &MetricTable) -> Result<Leaderboard, RankingError> {
    let t = table.teams.len();
    if t == 0 || table.cases.is_empty() {
        return Err(RankingError::EmptyTable);
    }
    let mut dsc_ranks = vec![Vec::new(); t];
    let mut hd95_ranks = vec![Vec::new(); t];
    let mut ranked_cases = Vec::new();
    let mut excluded_cases = Vec::new();

    for (c, case) in table.cases.iter().enumerate() {
        let d = per_case_ranks(&MetricTable::column(&table.dsc, c), Direction::HigherBetter);
        let h = per_case_ranks(&MetricTable::column(&table.hd95, c), Direction::LowerBetter);
        match (d, h) {
            (Some(d), Some(h)) => {
                for team in 0..t {
                    dsc_ranks[team].push(d[team]);
                    hd95_ranks[team].push(h[team]);
                }
                ranked_cases.push(case.clone());
            }
            _ => {
                warn!("case {case} has no values from any team; excluded from ranking");
                excluded_cases.push(case.clone());
            }
        }
    }
    if ranked_cases.is_empty() {
        return Err(RankingError::EmptyTable);
    }

    let mut standings: Vec<TeamStanding> = (0..t)
        .map(|team| {
            let case_scores: Vec<f64> = dsc_ranks[team]
                .iter()
                .zip(&hd95_ranks[team])
                .map(|(a, b)| a + b)
                .collect();
            let (brats_mean, brats_std) = mean_std(&case_scores);
            TeamStanding {
                team: table.teams[team].clone(),
                final_rank: 0,
                brats_mean,
                brats_std,
                case_scores,
            }
        })
        .collect();
    standings.sort_by(|a, b| {
        a.brats_mean
            .total_cmp(&b.brats_mean)
            .then(a.brats_std.total_cmp(&b.brats_std))
            .then_with(|| a.team.cmp(&b.team))
    });
    for (i, s) in standings.iter_mut().enumerate() {
        s.final_rank = i + 1;
    }

    Ok(Leaderboard {
        standings,
        ranked_cases,
        excluded_cases,
        dsc_ranks,
        hd95_ranks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SummaryStats {
    /// `mean ± std (median)` with `decimals` digits, e.g. `0.815 ± 0.200 (0.889)`.
    pub fn render(&self, decimals: usize) -> String {
        format!(
            "{:.d$} ± {:.d$} ({:.d$})",
            self.mean,
            self.std,
            self.median,
            d = decimals
        )
    }
}

/// Quantile `num / den` of sorted data, interpolating at `(n - 1) * num / den`.
fn quantile(sorted: &[f64], num: usize, den: usize) -> f64 {
    let scaled = num * (sorted.len() - 1);
    let lo = scaled / den;
    let rem = scaled % den;
    if rem == 0 {
        sorted[lo]
    } else {
        let frac = rem as f64 / den as f64;
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats, RankingError> {
    if values.is_empty() {
        return Err(RankingError::EmptyList);
    }
    let (mean, std) = mean_std(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        n: values.len(),
        mean,
        std,
        median: quantile(&sorted, 1, 2),
        q1: quantile(&sorted, 1, 4),
        q3: quantile(&sorted, 3, 4),
    })
}

/// One team's present values for one metric, for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionGroup {
    pub team: String,
    pub metric: Metric,
    pub cases: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionData {
    pub groups: Vec<DistributionGroup>,
}

pub fn emit_distribution_data(table: &MetricTable) -> DistributionData {
    let mut groups = Vec::new();
    for metric in [Metric::Dsc, Metric::Hd95] {
        let rows = match metric {
            Metric::Dsc => &table.dsc,
            Metric::Hd95 => &table.hd95,
        };
        for (t, team) in table.teams.iter().enumerate() {
            let (cases, values) = table
                .cases
                .iter()
                .zip(&rows[t])
                .filter_map(|(c, v)| v.map(|v| (c.clone(), v)))
                .unzip();
            groups.push(DistributionGroup {
                team: team.clone(),
                metric,
                cases,
                values,
            });
        }
    }
    DistributionData { groups }
}

impl DistributionData {
    /// Long-format CSV: `team,metric,case_id,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["team", "metric", "case_id", "value"]).unwrap();
        for g in &self.groups {
            for (case, v) in g.cases.iter().zip(&g.values) {
                w.write_record([g.team.as_str(), g.metric.as_str(), case, &v.to_string()])
                    .unwrap();
            }
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Inverse of [`DistributionData::to_csv`]. Rows for the same team and
    /// metric are grouped in order of first appearance.
    pub fn from_csv(text: &str) -> Result<Self, csv::Error> {
        #[derive(Deserialize)]
        struct Row {
            team: String,
            metric: Metric,
            case_id: String,
            value: f64,
        }
        let mut groups: Vec<DistributionGroup> = Vec::new();
        for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
            let row: Row = row?;
            let idx = match groups
                .iter()
                .position(|g| g.team == row.team && g.metric == row.metric)
            {
                Some(i) => i,
                None => {
                    groups.push(DistributionGroup {
                        team: row.team,
                        metric: row.metric,
                        cases: Vec::new(),
                        values: Vec::new(),
                    });
                    groups.len() - 1
                }
            };
            groups[idx].cases.push(row.case_id);
            groups[idx].values.push(row.value);
        }
        Ok(DistributionData { groups })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn strict_order() {
        let r = per_case_ranks(&[Some(0.9), Some(0.8), Some(0.7)], Direction::HigherBetter).unwrap();
        assert_eq!(r, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn fractional_ties() {
        let r = per_case_ranks(&[Some(2.0), Some(2.0), Some(5.0)], Direction::LowerBetter).unwrap();
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
        assert_eq!(r.iter().sum::<f64>(), 6.0);
    }

    #[test]
    fn missing_takes_worst() {
        let r = per_case_ranks(&[Some(0.5), None, Some(0.9)], Direction::HigherBetter).unwrap();
        assert_eq!(r, vec![2.0, 3.0, 1.0]);
        let r = per_case_ranks(&[None, Some(0.2), None, Some(0.9)], Direction::HigherBetter).unwrap();
        assert_eq!(r, vec![3.5, 2.0, 3.5, 1.0]);
        assert!(per_case_ranks(&[None, None], Direction::LowerBetter).is_none());
    }

    #[test]
    fn two_team_example() {
        let table = MetricTable::new(
            s(&["A", "B"]),
            s(&["c1"]),
            vec![vec![Some(0.9)], vec![Some(0.5)]],
            vec![vec![Some(1.0)], vec![Some(4.0)]],
        )
        .unwrap();
        let lb = brats_scores(&table).unwrap();
        assert_eq!(lb.standings[0].team, "A");
        assert_eq!(lb.standings[0].brats_mean, 2.0);
        assert_eq!(lb.standings[1].brats_mean, 4.0);
        assert_eq!(lb.dsc_ranks, vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn identical_teams_tie_break_by_name() {
        let table = MetricTable::new(
            s(&["zeta", "alpha"]),
            s(&["c1", "c2"]),
            vec![vec![Some(0.8), Some(0.7)]; 2],
            vec![vec![Some(3.0), Some(2.0)]; 2],
        )
        .unwrap();
        let lb = brats_scores(&table).unwrap();
        assert_eq!(lb.standings[0].brats_mean, lb.standings[1].brats_mean);
        assert_eq!(lb.standings[0].team, "alpha");
        assert_eq!(lb.standings[0].final_rank, 1);
    }

    #[test]
    fn all_missing_case_is_excluded() {
        let table = MetricTable::new(
            s(&["A", "B"]),
            s(&["c1", "c2"]),
            vec![vec![Some(0.9), None], vec![Some(0.5), None]],
            vec![vec![Some(1.0), None], vec![Some(4.0), None]],
        )
        .unwrap();
        let lb = brats_scores(&table).unwrap();
        assert_eq!(lb.excluded_cases, s(&["c2"]));
        assert_eq!(lb.ranked_cases, s(&["c1"]));
    }

    #[test]
    fn empty_and_invalid_tables() {
        let t = MetricTable::new(vec![], vec![], vec![], vec![]).unwrap();
        assert_eq!(brats_scores(&t), Err(RankingError::EmptyTable));
        assert!(MetricTable::new(s(&["A"]), s(&["c"]), vec![vec![Some(1.5)]], vec![vec![Some(0.0)]]).is_err());
        assert!(MetricTable::new(s(&["A"]), s(&["c"]), vec![vec![Some(0.5)]], vec![vec![Some(-1.0)]]).is_err());
        assert!(MetricTable::new(s(&["A"]), s(&["c", "d"]), vec![vec![Some(0.5)]], vec![vec![Some(1.0)]]).is_err());
    }

    #[test]
    fn summary_constant_list() {
        let st = summary_stats(&[5.0; 4]).unwrap();
        assert_eq!((st.mean, st.std, st.median, st.q1, st.q3), (5.0, 0.0, 5.0, 5.0, 5.0));
    }

    #[test]
    fn summary_interpolated_quartiles() {
        let st = summary_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(st.mean, 2.5);
        assert_eq!(st.median, 2.5);
        assert_eq!(st.q1, 1.75);
        assert_eq!(st.q3, 3.25);
        // sum of squares 5, n-1 = 3
        assert_eq!(st.std, (5.0f64 / 3.0).sqrt());
        assert_eq!(summary_stats(&[]), Err(RankingError::EmptyList));
    }

    #[test]
    fn render_layout() {
        let st = SummaryStats {
            n: 3,
            mean: 0.8149,
            std: 0.2,
            median: 0.8891,
            q1: 0.0,
            q3: 1.0,
        };
        assert_eq!(st.render(3), "0.815 ± 0.200 (0.889)");
    }

    #[test]
    fn distribution_groups() {
        let table = MetricTable::new(
            s(&["A"]),
            s(&["c1", "c2"]),
            vec![vec![Some(0.25), Some(0.75)]],
            vec![vec![Some(1.5), None]],
        )
        .unwrap();
        let d = emit_distribution_data(&table);
        assert_eq!(d.groups.len(), 2);
        assert_eq!(d.groups[0].values, vec![0.25, 0.75]);
        assert_eq!(d.groups[1].cases, s(&["c1"]));
        assert_eq!(
            d.to_csv(),
            "team,metric,case_id,value\nA,dsc,c1,0.25\nA,dsc,c2,0.75\nA,hd95,c1,1.5\n"
        );
    }
}
