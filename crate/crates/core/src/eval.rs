//! Evaluation curves for descriptors, correspondences and retrieval.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::charting::fast_marching;
use crate::mesh::Mesh;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k_max {k_max} exceeds the {available} reference descriptors")]
    RankTooLarge { k_max: usize, available: usize },
    #[error("index {index} out of range ({len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Cmc,
    Roc,
    Princeton,
    Pr,
}

impl CurveKind {
    pub fn csv_header(&self) -> &'static str {
        match self {
            CurveKind::Cmc => "CMC_k,CMC_rate",
            CurveKind::Roc => "ROC_fpr,ROC_tpr",
            CurveKind::Princeton => "PRINCETON_r,PRINCETON_fraction",
            CurveKind::Pr => "PR_recall,PR_precision",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    /// Queries or pairs the curve was computed from.
    pub samples: usize,
}

impl Curve {
    /// Ordinate at the last point whose abscissa is ≤ `x` (0 before the first).
    pub fn value_at(&self, x: f64) -> f64 {
        self.points.iter().take_while(|p| p.0 <= x).last().map_or(0.0, |p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(self.kind.csv_header());
        s.push('\n');
        for (x, y) in &self.points {
            writeln!(s, "{x},{y}").expect("write to string");
        }
        s
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1-based rank of `truth` among the references ordered by distance to
/// `query`, ties broken by ascending reference index.
pub fn rank_of(query: ndarray::ArrayView1<f64>, refs: ArrayView2<f64>, truth: usize) -> usize {
    let dt = sq_dist(query, refs.row(truth));
    let mut rank = 1;
    for (j, r) in refs.rows().into_iter().enumerate() {
        if j == truth {
            continue;
        }
        let d = sq_dist(query, r);
        if d < dt || (d == dt && j < truth) {
            rank += 1;
        }
    }
    rank
}

/// Cumulative match characteristic for k = 1..=k_max.
pub fn cmc(query: ArrayView2<f64>, reference: ArrayView2<f64>, ground_truth: &[usize], k_max: usize) -> Result<Curve, EvalError> {
    if query.ncols() != reference.ncols() {
        return Err(EvalError::DimensionMismatch {
            expected: reference.ncols(),
            found: query.ncols(),
        });
    }
    if ground_truth.len() != query.nrows() {
        return Err(EvalError::DimensionMismatch {
            expected: query.nrows(),
            found: ground_truth.len(),
        });
    }
    if k_max > reference.nrows() || k_max == 0 {
        return Err(EvalError::RankTooLarge {
            k_max,
            available: reference.nrows(),
        });
    }
    if let Some(&j) = ground_truth.iter().find(|&&j| j >= reference.nrows()) {
        return Err(EvalError::IndexOutOfRange {
            index: j,
            len: reference.nrows(),
        });
    }
    let ranks: Vec<usize> = (0..query.nrows())
        .into_par_iter()
        .map(|i| rank_of(query.row(i), reference, ground_truth[i]))
        .collect();
    let mut hist = vec![0usize; k_max + 1];
    for r in ranks {
        if r <= k_max {
            hist[r] += 1;
        }
    }
    let n = query.nrows().max(1) as f64;
    let mut acc = 0;
    let points = (1..=k_max)
        .map(|k| {
            acc += hist[k];
            (k as f64, acc as f64 / n)
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::Cmc,
        points,
        samples: query.nrows(),
    })
}

/// ROC over the given thresholds (all distinct observed distances when
/// `None`), closed by (0, 0) and (1, 1). A pair counts as accepted when its
/// distance is ≤ τ. Abscissae are non-decreasing: consecutive thresholds
/// that only admit positives share their false-positive rate.
pub fn roc(pos: &[f64], neg: &[f64], thresholds: Option<&[f64]>) -> Result<Curve, EvalError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::InvalidArgument("ROC needs positive and negative pairs".into()));
    }
    let mut ps = pos.to_vec();
    let mut ns = neg.to_vec();
    ps.sort_by(f64::total_cmp);
    ns.sort_by(f64::total_cmp);
    let mut taus: Vec<f64> = match thresholds {
        Some(t) => t.to_vec(),
        None => ps.iter().chain(&ns).copied().collect(),
    };
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let count_le = |v: &[f64], t: f64| v.partition_point(|&x| x <= t);
    let mut points = vec![(0.0, 0.0)];
    for t in taus {
        let p = (count_le(&ns, t) as f64 / ns.len() as f64, count_le(&ps, t) as f64 / ps.len() as f64);
        if points.last() != Some(&p) {
            points.push(p);
        }
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    Ok(Curve {
        kind: CurveKind::Roc,
        points,
        samples: pos.len() + neg.len(),
    })
}

/// Trapezoidal area under a curve.
pub fn auc(curve: &Curve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Fraction of queries whose predicted vertex lies within geodesic distance
/// `r · diameter` of the true vertex on `mesh`, for `steps + 1` radii evenly
/// spaced in `[0, r_max]`.
pub fn princeton(
    pred: &[usize],
    gt: &[usize],
    mesh: &Mesh,
    diameter: f64,
    r_max: f64,
    steps: usize,
) -> Result<Curve, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::DimensionMismatch {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    let n = mesh.vertex_count();
    if let Some(&v) = pred.iter().chain(gt).find(|&&v| v >= n) {
        return Err(EvalError::IndexOutOfRange { index: v, len: n });
    }
    if !(diameter > 0.0 && r_max >= 0.0) || steps == 0 {
        return Err(EvalError::InvalidArgument("need diameter > 0, r_max >= 0 and steps > 0".into()));
    }
    let mut by_truth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(gt) {
        by_truth.entry(t).or_default().push(p);
    }
    let reach = r_max * diameter * (1.0 + 1e-9);
    let groups: Vec<(usize, Vec<usize>)> = by_truth.into_iter().collect();
    let mut errors: Vec<f64> = groups
        .par_iter()
        .flat_map_iter(|(t, preds)| {
            let field = fast_marching(mesh, *t, reach);
            preds.iter().map(move |&p| field.distances[p] / diameter).collect::<Vec<_>>()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let total = pred.len().max(1) as f64;
    let points = (0..=steps)
        .map(|i| {
            let r = r_max * i as f64 / steps as f64;
            (r, errors.partition_point(|&e| e <= r) as f64 / total)
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::Princeton,
        points,
        samples: pred.len(),
    })
}

/// Interpolated precision at recall levels `0, 1/levels, …, 1`, averaged
/// over queries. `rankings[q]` orders the gallery for query `q`; the query
/// itself is removed from its own ranking. Queries without another member
/// of their class are skipped.
pub fn precision_recall(rankings: &[Vec<usize>], labels: &[usize], levels: usize) -> Result<Curve, EvalError> {
    if rankings.len() != labels.len() {
        return Err(EvalError::DimensionMismatch {
            expected: labels.len(),
            found: rankings.len(),
        });
    }
    if levels == 0 {
        return Err(EvalError::InvalidArgument("need at least one recall level".into()));
    }
    let mut sums = vec![0.0; levels + 1];
    let mut used = 0;
    for (q, ranking) in rankings.iter().enumerate() {
        if let Some(&g) = ranking.iter().find(|&&g| g >= labels.len()) {
            return Err(EvalError::IndexOutOfRange { index: g, len: labels.len() });
        }
        let gallery: Vec<usize> = ranking.iter().copied().filter(|&g| g != q).collect();
        let relevant = gallery.iter().filter(|&&g| labels[g] == labels[q]).count();
        if relevant == 0 {
            log::warn!("query {q} has no other member of class {}; skipped", labels[q]);
            continue;
        }
        let mut hits = 0;
        let mut pr = Vec::with_capacity(gallery.len());
        for (i, &g) in gallery.iter().enumerate() {
            if labels[g] == labels[q] {
                hits += 1;
            }
            pr.push((hits as f64 / relevant as f64, hits as f64 / (i + 1) as f64));
        }
        // Running maximum of precision from the tail.
        for i in (0..pr.len().saturating_sub(1)).rev() {
            pr[i].1 = pr[i].1.max(pr[i + 1].1);
        }
        for (l, s) in sums.iter_mut().enumerate() {
            let level = l as f64 / levels as f64;
            let idx = pr.partition_point(|p| p.0 < level - 1e-12);
            *s += pr.get(idx).map_or(0.0, |p| p.1);
        }
        used += 1;
    }
    let points = sums
        .iter()
        .enumerate()
        .map(|(l, s)| (l as f64 / levels as f64, if used > 0 { s / used as f64 } else { 0.0 }))
        .collect();
    Ok(Curve {
        kind: CurveKind::Pr,
        points,
        samples: used,
    })
}
