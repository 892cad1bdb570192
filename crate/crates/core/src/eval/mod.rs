//! Average precision, per-mask evaluation and the all-combinations sweep.

mod report;

pub use report::{parse_report_csv, report_emit, ParsedReport, ReportFormat};

use crate::data::{ColumnMap, Split};
use crate::model::{FeatureMask, HybridNet};
use crate::rng::SeededRng;
use crate::{Error, Result, Scalar};

/// Mean precision at the ranks of the positives.
///
/// Scores are ranked descending; equal scores keep ascending index order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("ranked labels", scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::Empty("ranked scores"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// `Some(ap)`, or `None` when the column has no positives.
pub fn average_precision_opt(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    match average_precision(scores, labels) {
        Ok(ap) => Ok(Some(ap)),
        Err(Error::NoPositives) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean of the defined entries, `None` if there are none.
pub fn mean_defined(aps: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskResult {
    pub mask: FeatureMask,
    pub label: String,
    /// Per attribute; `None` where the split has no positives.
    pub aps: Vec<Option<f64>>,
    pub mean_ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub attributes: Vec<String>,
    pub rows: Vec<MaskResult>,
    /// Positive rate per attribute on the evaluated split.
    pub prevalence: Vec<f64>,
    /// AP of uniformly random scores, per attribute.
    pub random_ap: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    pub fn new(attributes: Vec<String>, rows: Vec<MaskResult>, split_labels: &[Vec<bool>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("report rows"));
        }
        let means: Vec<f64> = rows.iter().map(|r| r.mean_ap).collect();
        let (mean, std) = mean_std(&means);
        let prevalence = split_labels
            .iter()
            .map(|col| col.iter().filter(|&&b| b).count() as f64 / col.len().max(1) as f64)
            .collect();
        let mut rng = SeededRng::with_stream(0, 0x7261_6e64);
        let random_ap = split_labels
            .iter()
            .map(|col| {
                let scores: Vec<f64> = col.iter().map(|_| rng.next_f64()).collect();
                average_precision_opt(&scores, col).ok().flatten()
            })
            .collect();
        Ok(Self {
            attributes,
            rows,
            prevalence,
            random_ap,
            mean,
            std,
        })
    }
}

/// Scores for every example of `split`, row-major `n x L`.
pub fn predict<T: Scalar>(net: &HybridNet<T>, split: &Split<T>, map: &ColumnMap, mask: FeatureMask) -> Result<Vec<Vec<f64>>> {
    split.require(map, mask)?;
    let mut buf = Vec::new();
    (0..split.len())
        .map(|i| {
            split.features(map, i, &mut buf);
            let (_, scores) = net.forward(&buf, mask)?;
            Ok(scores.iter().map(|s| s.as_f64()).collect())
        })
        .collect()
}

/// AP per attribute column of a score matrix.
pub fn column_aps(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<Vec<Option<f64>>> {
    labels
        .iter()
        .enumerate()
        .map(|(a, col)| {
            let s: Vec<f64> = scores.iter().map(|row| row[a]).collect();
            average_precision_opt(&s, col)
        })
        .collect()
}

fn label_columns<T: Scalar>(split: &Split<T>, attributes: usize) -> Vec<Vec<bool>> {
    (0..attributes).map(|a| split.label_column(a)).collect()
}

pub fn evaluate_mask<T: Scalar>(net: &HybridNet<T>, split: &Split<T>, mask: FeatureMask) -> Result<MaskResult> {
    let map = split.column_map(&net.encoder)?;
    let labels = label_columns(split, net.attributes.len());
    evaluate_with(net, split, &map, mask, &labels)
}

fn evaluate_with<T: Scalar>(
    net: &HybridNet<T>,
    split: &Split<T>,
    map: &ColumnMap,
    mask: FeatureMask,
    labels: &[Vec<bool>],
) -> Result<MaskResult> {
    if split.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let scores = predict(net, split, map, mask)?;
    let aps = column_aps(&scores, labels)?;
    let mean_ap = mean_defined(&aps).ok_or(Error::NoPositives)?;
    Ok(MaskResult {
        mask,
        label: net.mask_label(mask),
        aps,
        mean_ap,
    })
}

/// Mean AP for `mask` on `split`; the usual model-selection metric.
pub fn mean_ap<T: Scalar>(net: &HybridNet<T>, split: &Split<T>, mask: FeatureMask) -> Result<f64> {
    evaluate_mask(net, split, mask).map(|r| r.mean_ap)
}

/// Evaluates every non-empty mask over the net's kinds, in ascending bit order.
pub fn combination_sweep<T: Scalar>(net: &HybridNet<T>, split: &Split<T>) -> Result<EvalReport> {
    let masks: Vec<FeatureMask> = FeatureMask::nonempty_subsets(net.kind_count()).collect();
    evaluate_masks(net, split, &masks)
}

pub fn evaluate_masks<T: Scalar>(net: &HybridNet<T>, split: &Split<T>, masks: &[FeatureMask]) -> Result<EvalReport> {
    let map = split.column_map(&net.encoder)?;
    let labels = label_columns(split, net.attributes.len());
    let rows = masks
        .iter()
        .map(|&m| evaluate_with(net, split, &map, m, &labels))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(net.attributes.clone(), rows, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_is_one() {
        assert_eq!(average_precision(&[0.1, 0.9, 0.8, 0.2], &[false, true, true, false]).unwrap(), 1.0);
    }

    #[test]
    fn zero_positives_signaled() {
        assert!(matches!(average_precision(&[0.1, 0.2], &[false, false]), Err(Error::NoPositives)));
        assert_eq!(average_precision_opt(&[0.1], &[false]).unwrap(), None);
        assert!(average_precision(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn ties_follow_index_order() {
        // All tied: ranking is the original order.
        assert!((average_precision(&[0.5; 3], &[false, true, false]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(average_precision(&[0.5; 3], &[true, false, false]).unwrap(), 1.0);
    }

    #[test]
    fn monotone_transform_invariance() {
        let mut rng = SeededRng::new(4);
        for _ in 0..50 {
            let s: Vec<f64> = (0..30).map(|_| rng.next_f64()).collect();
            let l: Vec<bool> = (0..30).map(|i| i % 3 == 0 || rng.next_f64() < 0.3).collect();
            let t: Vec<f64> = s.iter().map(|x| (5.0 * x).exp() - 3.0).collect();
            assert_eq!(average_precision(&s, &l).unwrap(), average_precision(&t, &l).unwrap());
        }
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn mean_skips_undefined() {
        assert_eq!(mean_defined(&[Some(0.5), None, Some(1.0)]), Some(0.75));
        assert_eq!(mean_defined(&[None]), None);
    }
}
