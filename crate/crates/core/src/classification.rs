//! Closed-loop output classification.
//!
//! Three criteria decide each output's label, evaluated in order:
//! stationarity or periodicity (C1, which short-circuits to an
//! untrained-attractor label), confinement to the reference bounding box
//! (C2), and proximity of the height-coordinate maxima to lines fitted
//! through the ground-truth maxima, one per wing (C3). On top of these sit
//! period counting for limit cycles, extrema signatures for deduplication
//! and branch matching, and the five-way scenario table for basin samples.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{local_extrema, local_extrema_with_companion, ExtremumKind, Trajectory};
use crate::{Error, Result};

/// Tunable thresholds for the classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassifierParams {
    /// Componentwise range below which a window counts as a fixed point.
    pub eps_fp: f64,
    /// Per-value mismatch tolerance for cyclic matching of extrema values.
    pub eps_per: f64,
    /// Largest sequence period tried by the cyclic matcher.
    pub max_period: usize,
    /// Cluster tolerance for period counting.
    pub eps_cluster: f64,
    /// Maxima-line distance threshold.
    pub alpha: f64,
    /// Minimum maxima per wing for the reference line fit.
    pub min_fit_maxima: usize,
    /// Coarse cluster tolerance for extrema signatures.
    pub sig_cluster_tol: f64,
    /// Center distance below which two signatures denote one attractor.
    pub match_tol: f64,
    /// Coordinate whose maxima drive C1 periodicity and signatures.
    pub c1_coordinate: usize,
    /// Minimum classification window length in model units.
    pub min_window: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            eps_fp: 1e-4,
            eps_per: 1e-3,
            max_period: 16,
            eps_cluster: 0.002,
            alpha: 3.75,
            min_fit_maxima: 10,
            sig_cluster_tol: 0.5,
            match_tol: 2.0,
            c1_coordinate: 2,
            min_window: 30.0,
        }
    }
}

/// C1 verdict for a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C1Class {
    FixedPoint,
    LimitCycle { cycle: usize },
    Aperiodic,
}

impl C1Class {
    /// True when the window is stationary or periodic, the short-circuit
    /// case of the decision order.
    pub fn is_periodic_or_fixed(&self) -> bool {
        !matches!(self, C1Class::Aperiodic)
    }

    /// Variant equality ignoring the cycle length.
    pub fn same_kind(&self, other: &C1Class) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn tag(&self) -> String {
        match self {
            C1Class::FixedPoint => "fixed_point".into(),
            C1Class::LimitCycle { cycle } => format!("limit_cycle({cycle})"),
            C1Class::Aperiodic => "aperiodic".into(),
        }
    }
}

/// Final label of one closed-loop output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelValue {
    GoodRecon,
    PoorRecon,
    UaPreliminary,
    NeedsManualReview,
}

impl LabelValue {
    pub fn tag(&self) -> &'static str {
        match self {
            LabelValue::GoodRecon => "good_recon",
            LabelValue::PoorRecon => "poor_recon",
            LabelValue::UaPreliminary => "ua_preliminary",
            LabelValue::NeedsManualReview => "needs_manual_review",
        }
    }
}

/// Label plus the criterion values behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub value: LabelValue,
    pub c1: C1Class,
    pub c2: bool,
    pub c3: bool,
}

/// Axis-aligned closed box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    /// The reference box bounding the ground-truth Lorenz attractor.
    pub fn lorenz_reference() -> BoxBounds {
        BoxBounds {
            lo: vec![-22.0, -32.0, 0.0],
            hi: vec![22.0, 32.0, 55.0],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Ground-truth geometry for C2/C3: per-wing maxima lines, the bounding
/// box, and the distance threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceFit {
    /// (slope, intercept) in the (x1, x3-maximum) plane; index 0 is the
    /// x1 < 0 wing, index 1 the x1 >= 0 wing.
    pub wing_lines: [(f64, f64); 2],
    pub box_bounds: BoxBounds,
    pub alpha: f64,
}

fn line_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-12 {
        return Err(Error::Numeric(
            "wing maxima are vertically aligned; line fit is degenerate".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

impl ReferenceFit {
    /// Fits the two wing lines from a ground-truth trajectory's own
    /// height-coordinate maxima, split by the sign of the first coordinate.
    pub fn fit(reference: &Trajectory, params: &ClassifierParams) -> Result<ReferenceFit> {
        let z = reference.coordinate(params.c1_coordinate);
        let x = reference.coordinate(0);
        let maxima = local_extrema_with_companion(&z, &x, ExtremumKind::Maxima);
        let mut wings: [(Vec<f64>, Vec<f64>); 2] = Default::default();
        for (value, companion) in maxima.values.iter().zip(&maxima.companions) {
            let wing = usize::from(*companion >= 0.0);
            wings[wing].0.push(*companion);
            wings[wing].1.push(*value);
        }
        for (i, (xs, _)) in wings.iter().enumerate() {
            if xs.len() < params.min_fit_maxima {
                return Err(Error::InsufficientData(format!(
                    "wing {i} has {} maxima, the line fit needs {}",
                    xs.len(),
                    params.min_fit_maxima
                )));
            }
        }
        Ok(ReferenceFit {
            wing_lines: [
                line_fit(&wings[0].0, &wings[0].1)?,
                line_fit(&wings[1].0, &wings[1].1)?,
            ],
            box_bounds: BoxBounds::lorenz_reference(),
            alpha: params.alpha,
        })
    }
}

fn cyclic_match(values: &[f64], period: usize, eps: f64) -> bool {
    values[period..]
        .iter()
        .zip(values)
        .all(|(a, b)| (a - b).abs() < eps)
}

/// Stationarity / periodicity test. A window is a fixed point when every
/// coordinate's range stays below `eps_fp`; it is a limit cycle when the
/// sequence of height-coordinate maxima repeats under some shift
/// `p <= max_period` (each phase seen at least twice).
pub fn detect_c1(window: &Trajectory, params: &ClassifierParams) -> Result<C1Class> {
    let duration = (window.len().saturating_sub(1)) as f64 * window.tau;
    if duration + 1e-9 < params.min_window {
        return Err(Error::InsufficientData(format!(
            "classification window spans {duration:.2} model units, need {}",
            params.min_window
        )));
    }
    let mut max_range: f64 = 0.0;
    for c in 0..window.dim {
        let series = window.coordinate(c);
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max_range = max_range.max(hi - lo);
    }
    if max_range < params.eps_fp {
        return Ok(C1Class::FixedPoint);
    }
    let z = window.coordinate(params.c1_coordinate);
    let maxima = local_extrema(&z, ExtremumKind::Maxima);
    let m = maxima.values.len();
    for p in 1..=params.max_period {
        if m >= 2 * p && cyclic_match(&maxima.values, p, params.eps_per) {
            return Ok(C1Class::LimitCycle { cycle: p });
        }
    }
    Ok(C1Class::Aperiodic)
}

/// Box-confinement test: every sample inside the closed box.
pub fn detect_c2(window: &Trajectory, bounds: &BoxBounds) -> bool {
    window.samples().all(|s| bounds.contains(s))
}

/// Maxima-line test. Each height-coordinate maximum is assigned a wing by
/// the sign of the first coordinate and measured by vertical distance to
/// that wing's fitted line; the test passes when both wings have maxima and
/// every distance stays below `alpha`. Returns the verdict and the largest
/// distance seen (if any maxima exist).
pub fn detect_c3(window: &Trajectory, fit: &ReferenceFit) -> (bool, Option<f64>) {
    let z = window.coordinate(2);
    let x = window.coordinate(0);
    let maxima = local_extrema_with_companion(&z, &x, ExtremumKind::Maxima);
    if maxima.values.is_empty() {
        return (false, None);
    }
    let mut wing_seen = [false, false];
    let mut max_dist: f64 = 0.0;
    for (value, companion) in maxima.values.iter().zip(&maxima.companions) {
        let wing = usize::from(*companion >= 0.0);
        wing_seen[wing] = true;
        let (slope, intercept) = fit.wing_lines[wing];
        let dist = (value - (slope * companion + intercept)).abs();
        max_dist = max_dist.max(dist);
    }
    let ok = wing_seen[0] && wing_seen[1] && max_dist < fit.alpha;
    (ok, Some(max_dist))
}

/// Compact attractor identity used for deduplication and branch matching:
/// per-cycle extrema cluster centers for a periodic window, quantiles of the
/// extrema band for an aperiodic one, per-coordinate window means for a
/// fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSignature {
    pub coordinate: usize,
    pub kind: ExtremumKind,
    pub fixed_point: bool,
    pub centers: Vec<f64>,
    pub tol: f64,
}

/// Interpolated quantiles at fixed probe fractions; empty input gives an
/// empty probe set.
fn band_quantiles(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|q| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        })
        .collect()
}

/// Largest distance from any point of `from` to its nearest point of `to`.
/// Empty `from` gives 0; empty `to` gives infinity.
pub fn directed_hausdorff(from: &[f64], to: &[f64]) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    if to.is_empty() {
        return f64::INFINITY;
    }
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| (a - b).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

impl ExtremaSignature {
    pub fn from_window(
        window: &Trajectory,
        coordinate: usize,
        kind: ExtremumKind,
        c1: &C1Class,
        params: &ClassifierParams,
    ) -> ExtremaSignature {
        if matches!(c1, C1Class::FixedPoint) {
            let centers = (0..window.dim)
                .map(|c| {
                    let series = window.coordinate(c);
                    series.iter().sum::<f64>() / series.len() as f64
                })
                .collect();
            return ExtremaSignature {
                coordinate,
                kind,
                fixed_point: true,
                centers,
                tol: params.sig_cluster_tol,
            };
        }
        let series = window.coordinate(coordinate);
        let extrema = local_extrema(&series, kind);
        let m = extrema.values.len();
        let periodic = (1..=params.max_period)
            .any(|p| m >= 3 * p && cyclic_match(&extrema.values, p, params.eps_per));
        let centers = if periodic {
            // A clean cycle revisits the same extrema every pass, so gap
            // clustering recovers the per-cycle values; the floor drops
            // stray transient points.
            let clusters = cluster_1d(&extrema.values, params.sig_cluster_tol);
            let floor = ((m as f64) * 0.01).ceil().max(2.0) as usize;
            let mut centers: Vec<f64> = clusters
                .iter()
                .filter(|c| c.count >= floor)
                .map(|c| c.center)
                .collect();
            if centers.is_empty() {
                centers = clusters
                    .iter()
                    .max_by_key(|c| c.count)
                    .map(|c| vec![c.center])
                    .unwrap_or_default();
            }
            centers
        } else {
            // Aperiodic extrema fill a band whose raw clusters are dominated
            // by rare excursions and differ run-to-run; fixed order
            // statistics of the band identify it stably instead.
            band_quantiles(&extrema.values)
        };
        ExtremaSignature {
            coordinate,
            kind,
            fixed_point: false,
            centers,
            tol: params.sig_cluster_tol,
        }
    }

    /// Whether two signatures denote the same attractor under the given
    /// matching tolerance. Fixed points compare componentwise in state
    /// space; extrema signatures compare by symmetric Hausdorff distance
    /// between center sets.
    pub fn matches(&self, other: &ExtremaSignature, match_tol: f64) -> bool {
        if self.fixed_point != other.fixed_point {
            return false;
        }
        if self.fixed_point {
            return self.centers.len() == other.centers.len()
                && self
                    .centers
                    .iter()
                    .zip(&other.centers)
                    .all(|(a, b)| (a - b).abs() < match_tol);
        }
        if self.coordinate != other.coordinate || self.kind != other.kind {
            return false;
        }
        if self.centers.is_empty() && other.centers.is_empty() {
            return true;
        }
        let d = directed_hausdorff(&self.centers, &other.centers)
            .max(directed_hausdorff(&other.centers, &self.centers));
        d < match_tol
    }

    /// FNV-1a hash of the quantized centers, for report CSVs.
    pub fn hash_id(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        eat(self.fixed_point as u8);
        eat(self.coordinate as u8);
        eat(match self.kind {
            ExtremumKind::Maxima => 1,
            ExtremumKind::Minima => 2,
        });
        for c in &self.centers {
            let q = (c / 0.1).round() as i64;
            for b in q.to_le_bytes() {
                eat(b);
            }
        }
        h
    }
}

/// One-dimensional cluster produced by gap splitting.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub center: f64,
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Sorts the values and splits them wherever consecutive values are more
/// than `tol` apart; each run becomes one cluster with its mean as center.
pub fn cluster_1d(values: &[f64], tol: f64) -> Vec<Cluster> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
            let run = &sorted[start..i];
            clusters.push(Cluster {
                center: run.iter().sum::<f64>() / run.len() as f64,
                count: run.len(),
                lo: run[0],
                hi: run[run.len() - 1],
            });
            start = i;
        }
    }
    clusters
}

/// Period-count verdict: the number of distinct extrema clusters per cycle,
/// or aperiodic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodCount {
    Periodic(usize),
    Aperiodic,
}

impl PeriodCount {
    pub fn tag(&self) -> String {
        match self {
            PeriodCount::Periodic(n) => format!("period{n}"),
            PeriodCount::Aperiodic => "aperiodic".into(),
        }
    }
}

/// Counts the distinct extrema values per cycle of a periodic window: the
/// extrema-value sequence is matched cyclically (requiring at least three
/// full cycles), then one cycle's values are clustered at `eps_cluster` and
/// the clusters counted.
pub fn count_period(
    traj: &Trajectory,
    coordinate: usize,
    kind: ExtremumKind,
    params: &ClassifierParams,
) -> Result<PeriodCount> {
    let series = traj.coordinate(coordinate);
    let extrema = local_extrema(&series, kind);
    let m = extrema.values.len();
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "found {m} extrema, period counting needs at least 3 full cycles"
        )));
    }
    for p in 1..=params.max_period {
        if m >= 3 * p && cyclic_match(&extrema.values, p, params.eps_per) {
            let clusters = cluster_1d(&extrema.values[m - p..], params.eps_cluster);
            return Ok(PeriodCount::Periodic(clusters.len()));
        }
    }
    Ok(PeriodCount::Aperiodic)
}

/// Classification result for one output window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub label: ClassLabel,
    pub signature: ExtremaSignature,
    pub max_c3_distance: Option<f64>,
}

/// Runs the full decision order on a post-transient window: C1 first
/// (fixed point or limit cycle short-circuits to the untrained-attractor
/// label), then C2 and C3 decide between good and poor reconstruction;
/// everything else is exported for manual review.
pub fn classify_output(
    window: &Trajectory,
    fit: &ReferenceFit,
    params: &ClassifierParams,
) -> Result<ClassificationOutcome> {
    let c1 = detect_c1(window, params)?;
    let c2 = detect_c2(window, &fit.box_bounds);
    let (c3, max_c3_distance) = detect_c3(window, fit);
    let value = if c1.is_periodic_or_fixed() {
        LabelValue::UaPreliminary
    } else if c2 && c3 {
        LabelValue::GoodRecon
    } else if c2 {
        LabelValue::PoorRecon
    } else {
        LabelValue::NeedsManualReview
    };
    let signature = ExtremaSignature::from_window(
        window,
        params.c1_coordinate,
        ExtremumKind::Maxima,
        &c1,
        params,
    );
    Ok(ClassificationOutcome {
        label: ClassLabel { value, c1, c2, c3 },
        signature,
        max_c3_distance,
    })
}

/// One classified closed-loop output within a basin sample.
#[derive(Clone, Debug)]
pub struct BasinRecord {
    pub ic_index: usize,
    pub c1: C1Class,
    pub signature: ExtremaSignature,
    /// Present when a reference fit was available.
    pub label: Option<ClassLabel>,
    pub max_c3_distance: Option<f64>,
    pub final_state: Vec<f64>,
}

/// A distinct attractor found by a basin sample, with the ICs that reached
/// it.
#[derive(Clone, Debug)]
pub struct AttractorRecord {
    pub representative: BasinRecord,
    pub count: usize,
    pub members: Vec<usize>,
}

/// Merges records that reached the same attractor: same C1 variant and
/// matching signatures. Greedy against the first matching representative,
/// preserving input order.
pub fn dedup_attractors(records: Vec<BasinRecord>, params: &ClassifierParams) -> Vec<AttractorRecord> {
    let mut groups: Vec<AttractorRecord> = Vec::new();
    for record in records {
        let found = groups.iter_mut().find(|g| {
            g.representative.c1.same_kind(&record.c1)
                && g.representative
                    .signature
                    .matches(&record.signature, params.match_tol)
        });
        match found {
            Some(g) => {
                g.count += 1;
                g.members.push(record.ic_index);
            }
            None => {
                let ic = record.ic_index;
                groups.push(AttractorRecord {
                    representative: record,
                    count: 1,
                    members: vec![ic],
                });
            }
        }
    }
    groups
}

/// The five-way outcome of one basin sample.
///
/// 1: only good reconstructions; 2: only poor reconstructions; 3: only
/// untrained attractors; 4: good reconstruction coexists with untrained
/// attractors; 5: poor reconstruction coexists with untrained attractors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario(pub u8);

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps deduped, labelled records to a scenario. Good and poor
/// reconstructions together resolve to the good-based scenario.
/// Manual-review records count as poor-like when the maxima-line test
/// passed (the output escaped the box but shadows the reconstruction) and
/// as untrained attractors otherwise.
pub fn assign_scenario(records: &[AttractorRecord]) -> Result<Scenario> {
    if records.is_empty() {
        return Err(Error::InsufficientData(
            "scenario assignment needs at least one record".into(),
        ));
    }
    let mut has_good = false;
    let mut has_poor = false;
    let mut has_ua = false;
    for record in records {
        let label = record.representative.label.ok_or_else(|| {
            Error::InsufficientData("scenario assignment needs classified records".into())
        })?;
        match label.value {
            LabelValue::GoodRecon => has_good = true,
            LabelValue::PoorRecon => has_poor = true,
            LabelValue::UaPreliminary => has_ua = true,
            LabelValue::NeedsManualReview => {
                if label.c3 {
                    has_poor = true;
                } else {
                    has_ua = true;
                }
            }
        }
    }
    let value = if has_good {
        if has_ua {
            4
        } else {
            1
        }
    } else if has_poor {
        if has_ua {
            5
        } else {
            2
        }
    } else {
        3
    };
    Ok(Scenario(value))
}

/// Writes per-IC classification rows:
/// `run_id,ic_index,label,c1,c2,c3,max_c3_distance,signature_hash`.
pub fn write_classification_csv(
    path: &Path,
    run_id: &str,
    records: &[BasinRecord],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "run_id,ic_index,label,c1,c2,c3,max_c3_distance,signature_hash")?;
    for r in records {
        let (label, c2, c3) = match r.label {
            Some(l) => (l.value.tag().to_string(), l.c2.to_string(), l.c3.to_string()),
            None => ("unlabelled".into(), String::new(), String::new()),
        };
        let dist = r
            .max_c3_distance
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{run_id},{},{label},{},{c2},{c3},{dist},{:016x}",
            r.ic_index,
            r.c1.tag(),
            r.signature.hash_id()
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use crate::systems::{generate_training_signal, SourceSystem};

    fn make_orbit<F: Fn(f64) -> [f64; 3]>(f: F, tau: f64, duration: f64) -> Trajectory {
        let mut traj = Trajectory::new(3, tau, 0.0);
        let steps = (duration / tau).round() as usize;
        for i in 0..=steps {
            traj.push_sample(&f(i as f64 * tau));
        }
        traj
    }

    fn lorenz_window(duration: f64) -> Trajectory {
        generate_training_signal(&SourceSystem::Lorenz, 0.01, duration)
            .unwrap()
            .trajectory
    }

    #[test]
    fn constant_window_is_a_fixed_point() {
        let traj = make_orbit(|_| [1.0, -2.0, 3.0], 0.01, 40.0);
        let c1 = detect_c1(&traj, &ClassifierParams::default()).unwrap();
        assert_eq!(c1, C1Class::FixedPoint);
    }

    #[test]
    fn circular_orbit_is_a_period_one_cycle() {
        let traj = make_orbit(
            |t| [t.sin(), t.cos(), 0.5 + 0.3 * (t).sin()],
            0.01,
            60.0,
        );
        let c1 = detect_c1(&traj, &ClassifierParams::default()).unwrap();
        assert_eq!(c1, C1Class::LimitCycle { cycle: 1 });
    }

    #[test]
    fn lorenz_window_is_aperiodic() {
        let c1 = detect_c1(&lorenz_window(60.0), &ClassifierParams::default()).unwrap();
        assert_eq!(c1, C1Class::Aperiodic);
    }

    #[test]
    fn short_window_is_rejected() {
        let traj = make_orbit(|t| [t.sin(), 0.0, 0.0], 0.01, 10.0);
        assert!(matches!(
            detect_c1(&traj, &ClassifierParams::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn box_test_accepts_ground_truth_and_rejects_escapes() {
        let bounds = BoxBounds::lorenz_reference();
        assert!(detect_c2(&lorenz_window(60.0), &bounds));
        let low = make_orbit(|t| [t.sin(), 0.0, -1.0], 0.01, 40.0);
        assert!(!detect_c2(&low, &bounds));
        let origin = make_orbit(|_| [0.0, 0.0, 0.0], 0.01, 40.0);
        assert!(detect_c2(&origin, &bounds));
    }

    #[test]
    fn maxima_line_test_on_ground_truth_and_shifts() {
        let params = ClassifierParams::default();
        let reference = lorenz_window(200.0);
        let fit = ReferenceFit::fit(&reference, &params).unwrap();
        let window = lorenz_window(80.0);

        let (ok, dist) = detect_c3(&window, &fit);
        let dist = dist.unwrap();
        assert!(ok, "self-fit distance {dist}");
        assert!(dist < 2.0, "self-fit distance {dist} not well below alpha");

        // Distance verdict flips exactly around the observed maximum.
        let mut tight = fit.clone();
        tight.alpha = dist * 0.99;
        assert!(!detect_c3(&window, &tight).0);
        let mut loose = fit.clone();
        loose.alpha = dist * 1.01;
        assert!(loose.alpha < 3.75);
        assert!(detect_c3(&window, &loose).0);

        // A rigid +5 shift in the height coordinate leaves every maximum
        // about 5 away from the lines.
        let mut shifted = Trajectory::new(3, window.tau, 0.0);
        for s in window.samples() {
            shifted.push_sample(&[s[0], s[1], s[2] + 5.0]);
        }
        let (ok, dist) = detect_c3(&shifted, &fit);
        assert!(!ok);
        assert!((dist.unwrap() - 5.0).abs() < 1.5);

        // One-winged data cannot be certified.
        let mut one_wing = Trajectory::new(3, window.tau, 0.0);
        for s in window.samples() {
            one_wing.push_sample(&[s[0].abs(), s[1], s[2]]);
        }
        assert!(!detect_c3(&one_wing, &fit).0);
    }

    #[test]
    fn decision_order_short_circuits_periodic_outputs() {
        let params = ClassifierParams::default();
        let fit = ReferenceFit::fit(&lorenz_window(200.0), &params).unwrap();
        // A small cycle inside the box: C2 holds, yet the label must be the
        // untrained-attractor one.
        let cycle = make_orbit(
            |t| [2.0 + t.sin(), 2.0 + t.cos(), 20.0 + 0.5 * (2.0 * t).sin()],
            0.01,
            60.0,
        );
        let outcome = classify_output(&cycle, &fit, &params).unwrap();
        assert_eq!(outcome.label.value, LabelValue::UaPreliminary);
        assert!(outcome.label.c2);
    }

    #[test]
    fn ground_truth_classifies_as_good_reconstruction() {
        let params = ClassifierParams::default();
        let fit = ReferenceFit::fit(&lorenz_window(200.0), &params).unwrap();
        let outcome = classify_output(&lorenz_window(80.0), &fit, &params).unwrap();
        assert_eq!(outcome.label.value, LabelValue::GoodRecon);
        assert_eq!(outcome.label.c1, C1Class::Aperiodic);
        assert!(outcome.label.c2 && outcome.label.c3);
    }

    #[test]
    fn lifted_ground_truth_classifies_as_poor_reconstruction() {
        let params = ClassifierParams::default();
        let fit = ReferenceFit::fit(&lorenz_window(200.0), &params).unwrap();
        let window = lorenz_window(80.0);
        let mut lifted = Trajectory::new(3, window.tau, 0.0);
        for s in window.samples() {
            lifted.push_sample(&[s[0], s[1], s[2] + 5.0]);
        }
        let outcome = classify_output(&lifted, &fit, &params).unwrap();
        assert_eq!(outcome.label.value, LabelValue::PoorRecon);
    }

    #[test]
    fn sine_counts_as_period_one() {
        let traj = make_orbit(|t| [0.0, t.sin(), 0.0], 0.01, 60.0);
        let params = ClassifierParams::default();
        let count = count_period(&traj, 1, ExtremumKind::Maxima, &params).unwrap();
        assert_eq!(count, PeriodCount::Periodic(1));
    }

    #[test]
    fn incommensurate_torus_counts_as_aperiodic() {
        let traj = make_orbit(
            |t| [0.0, t.sin() + (std::f64::consts::SQRT_2 * t).sin(), 0.0],
            0.01,
            200.0,
        );
        let params = ClassifierParams::default();
        let count = count_period(&traj, 1, ExtremumKind::Maxima, &params).unwrap();
        assert_eq!(count, PeriodCount::Aperiodic);
    }

    #[test]
    fn too_few_extrema_is_an_error() {
        let traj = make_orbit(|t| [0.0, (0.05 * t).sin(), 0.0], 0.01, 40.0);
        let params = ClassifierParams::default();
        assert!(matches!(
            count_period(&traj, 1, ExtremumKind::Maxima, &params),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn clusters_split_on_gaps_and_stay_separated() {
        let values = [1.0, 1.01, 1.02, 2.0, 2.01, -3.0];
        let clusters = cluster_1d(&values, 0.05);
        assert_eq!(clusters.len(), 3);
        assert_eq!(clusters[0].count, 1);
        assert!((clusters[1].center - 1.01).abs() < 1e-12);
        assert_eq!(clusters[1].count, 3);
        assert_eq!(clusters[2].count, 2);
        for pair in clusters.windows(2) {
            assert!(pair[1].center - pair[0].center > 0.05);
        }
    }

    #[test]
    fn clustering_is_stable_under_reclustering() {
        let values = [4.0, 4.02, 6.0, 6.01, 9.5];
        let centers: Vec<f64> = cluster_1d(&values, 0.05).iter().map(|c| c.center).collect();
        let again: Vec<f64> = cluster_1d(&centers, 0.05).iter().map(|c| c.center).collect();
        assert_eq!(centers, again);
    }

    #[test]
    fn signatures_separate_mirror_fixed_points() {
        let params = ClassifierParams::default();
        let a = make_orbit(|_| [-5.0, 5.0, 10.0], 0.01, 40.0);
        let b = make_orbit(|_| [5.0, -5.0, 10.0], 0.01, 40.0);
        let sig_a = ExtremaSignature::from_window(&a, 2, ExtremumKind::Maxima, &C1Class::FixedPoint, &params);
        let sig_b = ExtremaSignature::from_window(&b, 2, ExtremumKind::Maxima, &C1Class::FixedPoint, &params);
        assert!(!sig_a.matches(&sig_b, params.match_tol));
        assert!(sig_a.matches(&sig_a.clone(), params.match_tol));
        assert_ne!(sig_a.hash_id(), sig_b.hash_id());
    }

    #[test]
    fn chaotic_windows_from_different_starts_share_a_signature() {
        // Ten Lorenz runs from scattered starts must dedup to one record.
        // Windows of 1000 units: chaotic signatures need enough maxima for
        // the coarse cluster centers to stabilise run-to-run.
        let params = ClassifierParams::default();
        let mut records = Vec::new();
        for i in 0..10 {
            let ic = [
                1.0 + 3.0 * (i as f64 * 0.7).sin(),
                -2.0 + 3.0 * (i as f64 * 1.3).cos(),
                15.0 + 2.0 * (i as f64 * 0.4).sin(),
            ];
            let sys = SourceSystem::Lorenz;
            let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
                let _ = t;
                sys.rhs(x, dx);
            };
            let full = integrate(&mut f, &ic, 0.0, 0.01, 110_000).unwrap();
            let window = full.window_from(10_000);
            let c1 = detect_c1(&window, &params).unwrap();
            assert_eq!(c1, C1Class::Aperiodic, "run {i}");
            records.push(BasinRecord {
                ic_index: i,
                c1,
                signature: ExtremaSignature::from_window(
                    &window,
                    2,
                    ExtremumKind::Maxima,
                    &c1,
                    &params,
                ),
                label: None,
                max_c3_distance: None,
                final_state: vec![],
            });
        }
        let groups = dedup_attractors(records, &params);
        assert_eq!(
            groups.len(),
            1,
            "expected one attractor, centers: {:?}",
            groups
                .iter()
                .map(|g| g.representative.signature.centers.clone())
                .collect::<Vec<_>>()
        );
        assert_eq!(groups[0].count, 10);
    }

    fn record_with(label: LabelValue, c3: bool, center: f64) -> BasinRecord {
        BasinRecord {
            ic_index: 0,
            c1: C1Class::Aperiodic,
            signature: ExtremaSignature {
                coordinate: 2,
                kind: ExtremumKind::Maxima,
                fixed_point: false,
                centers: vec![center],
                tol: 0.5,
            },
            label: Some(ClassLabel {
                value: label,
                c1: C1Class::Aperiodic,
                c2: label != LabelValue::NeedsManualReview,
                c3,
            }),
            max_c3_distance: None,
            final_state: vec![],
        }
    }

    fn group_of(record: BasinRecord) -> AttractorRecord {
        AttractorRecord {
            representative: record,
            count: 1,
            members: vec![0],
        }
    }

    #[test]
    fn dedup_merges_copies_and_separates_kinds() {
        let params = ClassifierParams::default();
        let mut records: Vec<BasinRecord> = (0..100)
            .map(|i| {
                let mut r = record_with(LabelValue::UaPreliminary, false, 7.0);
                r.ic_index = i;
                r.c1 = C1Class::FixedPoint;
                r.signature.fixed_point = true;
                r.signature.centers = vec![1.0, 2.0, 3.0];
                r
            })
            .collect();
        let groups = dedup_attractors(records.clone(), &params);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].count, 100);

        let mut cycle = record_with(LabelValue::UaPreliminary, false, 7.0);
        cycle.c1 = C1Class::LimitCycle { cycle: 1 };
        records.push(cycle);
        let groups = dedup_attractors(records, &params);
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn scenario_table_maps_label_sets() {
        let g = |l, c3, c| group_of(record_with(l, c3, c));
        // Only a good reconstruction.
        let s = assign_scenario(&[g(LabelValue::GoodRecon, true, 40.0)]).unwrap();
        assert_eq!(s, Scenario(1));
        // Only untrained attractors.
        let uas: Vec<AttractorRecord> = (0..3)
            .map(|i| g(LabelValue::UaPreliminary, false, i as f64 * 10.0))
            .collect();
        assert_eq!(assign_scenario(&uas).unwrap(), Scenario(3));
        // Poor reconstruction next to an untrained attractor.
        let s = assign_scenario(&[
            g(LabelValue::PoorRecon, false, 40.0),
            g(LabelValue::UaPreliminary, false, 7.0),
        ])
        .unwrap();
        assert_eq!(s, Scenario(5));
        // Good wins over poor.
        let s = assign_scenario(&[
            g(LabelValue::GoodRecon, true, 40.0),
            g(LabelValue::PoorRecon, false, 35.0),
        ])
        .unwrap();
        assert_eq!(s, Scenario(1));
        let s = assign_scenario(&[
            g(LabelValue::GoodRecon, true, 40.0),
            g(LabelValue::PoorRecon, false, 35.0),
            g(LabelValue::UaPreliminary, false, 7.0),
        ])
        .unwrap();
        assert_eq!(s, Scenario(4));
        // Manual-review records: line-shadowing ones count as poor-like,
        // the rest as untrained attractors.
        let s = assign_scenario(&[g(LabelValue::NeedsManualReview, true, 40.0)]).unwrap();
        assert_eq!(s, Scenario(2));
        let s = assign_scenario(&[g(LabelValue::NeedsManualReview, false, 40.0)]).unwrap();
        assert_eq!(s, Scenario(3));
    }

    #[test]
    fn classification_csv_has_one_row_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let records = vec![
            record_with(LabelValue::GoodRecon, true, 40.0),
            record_with(LabelValue::UaPreliminary, false, 7.0),
        ];
        write_classification_csv(&path, "demo", &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "run_id,ic_index,label,c1,c2,c3,max_c3_distance,signature_hash"
        );
        assert!(lines[1].starts_with("demo,0,good_recon,aperiodic,true,true,"));
    }
}
