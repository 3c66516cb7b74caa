//! Accuracy-vs-cost curves, Pareto frontiers, crossover points, and
//! diminishing-returns analysis.
//!
//! A family's curve holds one point per ensemble size n, with cost
//! `n × per-member FLOPs` and accuracy averaged over seeded random member
//! subsets. Frontiers keep the maximal non-dominated points; crossovers
//! locate the cost at which one family's best-so-far accuracy first beats
//! another's.

use std::path::Path;

use rayon::prelude::*;

use crate::aggregate::{ensemble_accuracy, AggregationRule};
use crate::cost::ModelProfile;
use crate::error::{Error, Result};
use crate::prediction::PredictionSet;
use crate::rng::{derive_rng, tag};

/// Random subsets averaged per ensemble size when building a curve.
pub const DEFAULT_REPLICATES: usize = 20;

/// Smallest accuracy increment still counted as real improvement: double
/// the ~0.1% replica-to-replica noise seen between retrained models.
pub const DEFAULT_MIN_GAIN: f64 = 0.002;

/// Which resource the cost axis measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostUnit {
    Flops,
    LatencyMs,
}

impl CostUnit {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostUnit::Flops => "flops",
            CostUnit::LatencyMs => "latency_ms",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flops" => Ok(CostUnit::Flops),
            "latency_ms" => Ok(CostUnit::LatencyMs),
            other => Err(Error::InvalidCurve {
                family: String::new(),
                reason: format!("unknown cost unit `{other}`"),
            }),
        }
    }
}

/// One (cost, accuracy) measurement for an ensemble of a given size.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub family: String,
    pub ensemble_size: usize,
    pub cost: f64,
    pub cost_unit: CostUnit,
    pub accuracy: f64,
}

impl CurvePoint {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidCurve {
            family: self.family.clone(),
            reason,
        };
        if self.ensemble_size < 1 {
            return Err(invalid("ensemble_size must be >= 1".to_string()));
        }
        if !(self.cost.is_finite() && self.cost > 0.0) {
            return Err(invalid(format!("cost {} must be a positive finite value", self.cost)));
        }
        if !(self.accuracy.is_finite() && (0.0..=1.0).contains(&self.accuracy)) {
            return Err(invalid(format!("accuracy {} outside [0, 1]", self.accuracy)));
        }
        Ok(())
    }
}

/// A family's accuracy-vs-cost curve, ordered by ensemble size.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCurve {
    pub family: String,
    points: Vec<CurvePoint>,
}

impl EnsembleCurve {
    /// Validates ordering (sizes and costs strictly increasing), unit
    /// consistency, and per-point ranges.
    pub fn new(family: impl Into<String>, points: Vec<CurvePoint>) -> Result<Self> {
        let family = family.into();
        let invalid = |reason: String| Error::InvalidCurve {
            family: family.clone(),
            reason,
        };
        if points.is_empty() {
            return Err(invalid("curve has no points".to_string()));
        }
        for point in &points {
            point.validate()?;
            if point.family != family {
                return Err(invalid(format!(
                    "point belongs to family `{}`",
                    point.family
                )));
            }
            if point.cost_unit != points[0].cost_unit {
                return Err(Error::MixedCostUnits);
            }
        }
        for pair in points.windows(2) {
            if pair[1].ensemble_size <= pair[0].ensemble_size {
                return Err(invalid("ensemble sizes must strictly increase".to_string()));
            }
            if pair[1].cost <= pair[0].cost {
                return Err(invalid("costs must strictly increase with size".to_string()));
            }
        }
        Ok(EnsembleCurve { family, points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn cost_unit(&self) -> CostUnit {
        self.points[0].cost_unit
    }

    /// Best accuracy achievable at cost ≤ `cost` (step interpolation).
    /// `None` when the budget buys nothing from this family.
    pub fn best_accuracy_at(&self, cost: f64) -> Option<f64> {
        self.points
            .iter()
            .take_while(|p| p.cost <= cost)
            .map(|p| p.accuracy)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }
}

/// True iff `a` is at least as accurate and at most as costly as `b`, with
/// at least one strict. Both points must be measured in the same unit.
pub fn dominates(a: &CurvePoint, b: &CurvePoint) -> bool {
    a.accuracy >= b.accuracy
        && a.cost <= b.cost
        && (a.accuracy > b.accuracy || a.cost < b.cost)
}

/// Indices (into the input) of the Pareto-maximal points, ordered by cost
/// ascending. Exact (cost, accuracy) duplicates keep the first occurrence
/// by input order.
pub fn pareto_frontier_indices(points: &[CurvePoint]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyPointList);
    }
    for point in points {
        point.validate()?;
        if point.cost_unit != points[0].cost_unit {
            return Err(Error::MixedCostUnits);
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    // Cost ascending; at equal cost the best accuracy first; at exact ties
    // the earliest input index first, so the sweep keeps it.
    order.sort_by(|&i, &j| {
        points[i]
            .cost
            .total_cmp(&points[j].cost)
            .then(points[j].accuracy.total_cmp(&points[i].accuracy))
            .then(i.cmp(&j))
    });
    let mut frontier = Vec::new();
    let mut best_accuracy = f64::NEG_INFINITY;
    for idx in order {
        if points[idx].accuracy > best_accuracy {
            best_accuracy = points[idx].accuracy;
            frontier.push(idx);
        }
    }
    Ok(frontier)
}

/// The Pareto-maximal subset of `points`, sorted by cost ascending.
pub fn pareto_frontier(points: &[CurvePoint]) -> Result<Vec<CurvePoint>> {
    Ok(pareto_frontier_indices(points)?
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn sample_subset(seed: u64, n: usize, replicate: usize, pool: usize) -> Vec<usize> {
    let mut rng = derive_rng(seed, &[tag("curve-subset"), n as u64, replicate as u64]);
    let mut indices: Vec<usize> = (0..pool).collect();
    for i in 0..n {
        let j = rand::Rng::random_range(&mut rng, i..pool);
        indices.swap(i, j);
    }
    let mut subset = indices[..n].to_vec();
    subset.sort_unstable();
    subset
}

/// Builds a family's accuracy-vs-FLOPs curve from its member predictions.
///
/// The n=1 point carries the median single-model accuracy. Each larger n
/// averages `replicates` seeded random n-subsets (one evaluation when n uses
/// every member, since there is only one such subset). Cost is exactly
/// `n × profile.flops`. Subsets are drawn up front from streams keyed by
/// (seed, n, replicate), so the parallel evaluation order cannot affect the
/// result.
pub fn build_ensemble_curve(
    profile: &ModelProfile,
    members: &[PredictionSet],
    labels: &[usize],
    rule: &AggregationRule,
    replicates: usize,
    seed: u64,
) -> Result<EnsembleCurve> {
    profile.validate()?;
    rule.validate()?;
    if members.is_empty() {
        return Err(Error::EmptyMemberList);
    }
    if replicates < 1 {
        return Err(Error::ReplicatesTooSmall);
    }

    let singles: Vec<f64> = members
        .iter()
        .map(|m| m.top1_accuracy(labels))
        .collect::<Result<_>>()?;

    let pool = members.len();
    let mut jobs: Vec<(usize, Vec<usize>)> = Vec::new();
    for n in 2..=pool {
        let reps = if n == pool { 1 } else { replicates };
        for r in 0..reps {
            jobs.push((n, sample_subset(seed, n, r, pool)));
        }
    }
    let accuracies: Vec<f64> = jobs
        .par_iter()
        .map(|(_, subset)| {
            let refs: Vec<&PredictionSet> = subset.iter().map(|&i| &members[i]).collect();
            ensemble_accuracy(&refs, labels, rule)
        })
        .collect::<Result<_>>()?;

    let point = |n: usize, accuracy: f64| -> Result<CurvePoint> {
        let cost = (n as u64)
            .checked_mul(profile.flops)
            .ok_or_else(|| Error::InvariantViolation("curve cost overflow".to_string()))?;
        Ok(CurvePoint {
            family: profile.family.clone(),
            ensemble_size: n,
            cost: cost as f64,
            cost_unit: CostUnit::Flops,
            accuracy,
        })
    };

    let mut points = vec![point(1, median(singles))?];
    let mut cursor = 0;
    for n in 2..=pool {
        let reps = if n == pool { 1 } else { replicates };
        let sum: f64 = accuracies[cursor..cursor + reps].iter().sum();
        cursor += reps;
        points.push(point(n, sum / reps as f64)?);
    }
    EnsembleCurve::new(profile.family.clone(), points)
}

fn exceeds_at(challenger: &EnsembleCurve, baseline: &EnsembleCurve, cost: f64) -> bool {
    match (challenger.best_accuracy_at(cost), baseline.best_accuracy_at(cost)) {
        (Some(c), Some(b)) => c > b,
        // A budget that buys something from the challenger but nothing from
        // the baseline counts as the challenger being ahead.
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// The minimum cost at which `challenger`'s step-interpolated
/// best-accuracy-so-far exceeds `baseline`'s; `None` if it never does.
/// Returns `None` for curves measured in different units.
pub fn crossover_cost(baseline: &EnsembleCurve, challenger: &EnsembleCurve) -> Option<f64> {
    if baseline.cost_unit() != challenger.cost_unit() {
        return None;
    }
    // Both step functions only change value at curve points, so the minimum
    // lives in the union of point costs.
    let mut candidates: Vec<f64> = baseline
        .points()
        .iter()
        .chain(challenger.points())
        .map(|p| p.cost)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .find(|&c| exceeds_at(challenger, baseline, c))
}

/// The largest ensemble size reached before an accuracy increment falls
/// below `min_gain`: every step up to the returned size gained at least
/// `min_gain`.
pub fn optimal_ensemble_size(curve: &EnsembleCurve, min_gain: f64) -> usize {
    let points = curve.points();
    let mut best = points[0].ensemble_size;
    for pair in points.windows(2) {
        if pair[1].accuracy - pair[0].accuracy >= min_gain {
            best = pair[1].ensemble_size;
        } else {
            break;
        }
    }
    best
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv writer: {other:?}")),
    })
}

fn write_row<S: AsRef<[u8]>>(
    writer: &mut csv::Writer<std::fs::File>,
    path: &Path,
    row: &[S],
) -> Result<()> {
    writer.write_record(row).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv write: {other:?}")),
    })
}

/// Writes points as `family,ensemble_size,cost,cost_unit,accuracy`.
pub fn write_points_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    write_row(
        &mut writer,
        path,
        &["family", "ensemble_size", "cost", "cost_unit", "accuracy"],
    )?;
    for p in points {
        write_row(
            &mut writer,
            path,
            &[
                p.family.clone(),
                p.ensemble_size.to_string(),
                format!("{}", p.cost),
                p.cost_unit.as_str().to_string(),
                format!("{}", p.accuracy),
            ],
        )?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes points with a trailing `on_frontier` flag (1 = Pareto-maximal).
/// Points appear in input order.
pub fn write_frontier_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let frontier = pareto_frontier_indices(points)?;
    let mut on_frontier = vec![false; points.len()];
    for idx in frontier {
        on_frontier[idx] = true;
    }
    let mut writer = csv_writer(path)?;
    write_row(
        &mut writer,
        path,
        &[
            "family",
            "ensemble_size",
            "cost",
            "cost_unit",
            "accuracy",
            "on_frontier",
        ],
    )?;
    for (p, flag) in points.iter().zip(&on_frontier) {
        write_row(
            &mut writer,
            path,
            &[
                p.family.clone(),
                p.ensemble_size.to_string(),
                format!("{}", p.cost),
                p.cost_unit.as_str().to_string(),
                format!("{}", p.accuracy),
                if *flag { "1" } else { "0" }.to_string(),
            ],
        )?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a `family,ensemble_size,cost,cost_unit,accuracy` file back into
/// points.
pub fn load_points_csv(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("{other:?}"),
            },
        })?;
    let expected = ["family", "ensemble_size", "cost", "cost_unit", "accuracy"];
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().ne(expected) {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected `{}`", expected.join(",")),
        });
    }
    let mut points = Vec::new();
    for (row, item) in reader.records().enumerate() {
        let record = item.map_err(|e| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let field = |i: usize| record.get(i).unwrap_or_default().to_string();
        let parse_num = |i: usize, what: &'static str| -> Result<f64> {
            record
                .get(i)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| Error::UnparsableField {
                    path: path.to_path_buf(),
                    row,
                    value: field(i),
                    what,
                })
        };
        let point = CurvePoint {
            family: field(0),
            ensemble_size: parse_num(1, "ensemble size")? as usize,
            cost: parse_num(2, "cost")?,
            cost_unit: CostUnit::parse(&field(3))?,
            accuracy: parse_num(4, "accuracy")?,
        };
        point.validate()?;
        points.push(point);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pt(family: &str, n: usize, cost: f64, accuracy: f64) -> CurvePoint {
        CurvePoint {
            family: family.to_string(),
            ensemble_size: n,
            cost,
            cost_unit: CostUnit::Flops,
            accuracy,
        }
    }

    fn curve(family: &str, costs_accs: &[(f64, f64)]) -> EnsembleCurve {
        let points = costs_accs
            .iter()
            .enumerate()
            .map(|(i, &(c, a))| pt(family, i + 1, c, a))
            .collect();
        EnsembleCurve::new(family, points).unwrap()
    }

    #[test]
    fn dominance_matches_the_anchor_example() {
        let cheap = pt("small", 8, 80.0, 0.95);
        let pricey = pt("large", 1, 150.0, 0.95);
        assert!(dominates(&cheap, &pricey));
        assert!(!dominates(&pricey, &cheap));
        assert!(!dominates(&cheap, &cheap));
        assert!(!dominates(&pt("x", 1, 10.0, 0.5), &pt("y", 1, 5.0, 0.9)));
    }

    #[test]
    fn frontier_of_single_point_is_itself() {
        let p = pt("solo", 1, 42.0, 0.5);
        assert_eq!(pareto_frontier(std::slice::from_ref(&p)).unwrap(), vec![p]);
    }

    #[test]
    fn frontier_drops_the_dominated_anchor() {
        let points = vec![pt("large", 1, 150.0, 0.95), pt("small", 8, 80.0, 0.95)];
        let frontier = pareto_frontier(&points).unwrap();
        assert_eq!(frontier, vec![points[1].clone()]);
    }

    #[test]
    fn frontier_keeps_first_of_exact_duplicates() {
        let points = vec![
            pt("a", 2, 5.0, 0.8),
            pt("b", 2, 5.0, 0.8),
            pt("c", 1, 3.0, 0.7),
        ];
        let indices = pareto_frontier_indices(&points).unwrap();
        assert_eq!(indices, vec![2, 0]);
    }

    #[test]
    fn frontier_rejects_empty_and_mixed_units() {
        assert!(matches!(pareto_frontier(&[]), Err(Error::EmptyPointList)));
        let mut latency_pt = pt("a", 1, 5.0, 0.5);
        latency_pt.cost_unit = CostUnit::LatencyMs;
        assert!(matches!(
            pareto_frontier(&[pt("a", 1, 3.0, 0.4), latency_pt]),
            Err(Error::MixedCostUnits)
        ));
    }

    #[test]
    fn curve_validation_enforces_monotone_cost_and_size() {
        let bad_cost = vec![pt("f", 1, 10.0, 0.9), pt("f", 2, 10.0, 0.91)];
        assert!(matches!(
            EnsembleCurve::new("f", bad_cost),
            Err(Error::InvalidCurve { .. })
        ));
        let bad_size = vec![pt("f", 2, 10.0, 0.9), pt("f", 2, 20.0, 0.91)];
        assert!(matches!(
            EnsembleCurve::new("f", bad_size),
            Err(Error::InvalidCurve { .. })
        ));
    }

    // Two synthetic families shaped like adjacent EfficientNet scales: the
    // bigger per-model family starts pricier but its first point already
    // beats everything the smaller family can buy at that cost.
    fn b0() -> EnsembleCurve {
        curve("b0", &[(390.0, 0.70), (780.0, 0.715), (1170.0, 0.722)])
    }
    fn b1() -> EnsembleCurve {
        curve("b1", &[(700.0, 0.73), (1400.0, 0.745), (2100.0, 0.752)])
    }
    fn b3() -> EnsembleCurve {
        curve("b3", &[(1800.0, 0.815), (3600.0, 0.829), (5400.0, 0.834)])
    }
    fn b4() -> EnsembleCurve {
        curve("b4", &[(4200.0, 0.826), (8400.0, 0.832), (12600.0, 0.834)])
    }

    #[test]
    fn crossover_finds_the_first_overtaking_cost() {
        assert_eq!(crossover_cost(&b0(), &b1()), Some(700.0));
        // The two-model b3 ensemble already beats the single b4 at lower
        // cost, and b4 never catches up.
        assert_eq!(crossover_cost(&b3(), &b4()), None);
    }

    #[test]
    fn crossover_matches_a_dense_grid_oracle() {
        let small = b0();
        let large = b1();
        let found = crossover_cost(&small, &large).unwrap();

        // Independent step-function scan over 10^4 cost samples.
        let best_at = |curve: &EnsembleCurve, cost: f64| -> Option<f64> {
            let mut best: Option<f64> = None;
            for p in curve.points() {
                if p.cost <= cost {
                    best = Some(best.map_or(p.accuracy, |b| p.accuracy.max(b)));
                }
            }
            best
        };
        let (lo, hi) = (300.0, 2200.0);
        let mut grid_first = None;
        for k in 0..=10_000 {
            let c = lo + (hi - lo) * k as f64 / 10_000.0;
            let wins = match (best_at(&large, c), best_at(&small, c)) {
                (Some(l), Some(s)) => l > s,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if wins {
                grid_first = Some(c);
                break;
            }
        }
        let grid_first = grid_first.unwrap();
        let step = (hi - lo) / 10_000.0;
        assert!(grid_first >= found && grid_first - found <= step,
            "grid located {grid_first}, crossover_cost returned {found}");
    }

    #[test]
    fn crossover_none_when_uniformly_worse() {
        let weak = curve("weak", &[(500.0, 0.60), (1000.0, 0.62)]);
        assert_eq!(crossover_cost(&b0(), &weak), None);
    }

    #[test]
    fn crossover_is_qualitatively_antisymmetric_on_the_fixtures() {
        let c = crossover_cost(&b0(), &b1()).unwrap();
        // b0 does overtake b1 on the cheap side (before b1 exists), but
        // never again at or past b1's crossover.
        if let Some(reverse) = crossover_cost(&b1(), &b0()) {
            assert!(reverse < c, "reverse crossover {reverse} not below {c}");
        }
    }

    #[test]
    fn optimal_size_stops_at_the_first_small_increment() {
        let flat = curve("flat", &[(1.0, 0.9), (2.0, 0.9), (3.0, 0.9)]);
        assert_eq!(optimal_ensemble_size(&flat, DEFAULT_MIN_GAIN), 1);

        let steps = curve(
            "steps",
            &[
                (1.0, 0.800),
                (2.0, 0.810),  // +1.0%
                (3.0, 0.815),  // +0.5%
                (4.0, 0.818),  // +0.3%
                (5.0, 0.819),  // +0.1% -> below the 0.2% default
                (6.0, 0.8195),
            ],
        );
        assert_eq!(optimal_ensemble_size(&steps, DEFAULT_MIN_GAIN), 4);
    }

    #[test]
    fn points_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let points = vec![pt("a", 1, 390.0, 0.70125), pt("a", 2, 780.0, 0.7149999999)];
        write_points_csv(&points, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("family,ensemble_size,cost,cost_unit,accuracy\n"));
        assert_eq!(load_points_csv(&path).unwrap(), points);
    }

    #[test]
    fn frontier_csv_flags_only_the_maximal_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frontier.csv");
        let points = vec![
            pt("small", 8, 80.0, 0.95),
            pt("large", 1, 150.0, 0.95),
            pt("small", 1, 10.0, 0.94),
        ];
        write_frontier_csv(&points, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "family,ensemble_size,cost,cost_unit,accuracy,on_frontier"
        );
        assert!(lines[1].ends_with(",1"), "80M point on frontier: {}", lines[1]);
        assert!(lines[2].ends_with(",0"), "150M point dominated: {}", lines[2]);
        assert!(lines[3].ends_with(",1"), "10M point on frontier: {}", lines[3]);
    }
}
