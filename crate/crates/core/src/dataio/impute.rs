use serde::{Deserialize, Serialize};

use super::{is_missing, Dataset};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputeStrategy {
    Zero,
    ColumnMean,
}

/// A column had no observed values under `ColumnMean` and was zero-filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeWarning {
    pub feature: String,
}

pub fn impute_missing(d: &Dataset, strategy: ImputeStrategy) -> Result<(Dataset, Vec<ImputeWarning>)> {
    let n = d.n_samples();
    let p = d.n_features();
    let mut fill = vec![0.0; p];
    let mut warnings = Vec::new();
    if strategy == ImputeStrategy::ColumnMean {
        for (j, slot) in fill.iter_mut().enumerate() {
            let (sum, count) = (0..n)
                .map(|i| d.value(i, j))
                .filter(|v| !is_missing(*v))
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            if count == 0 {
                warnings.push(ImputeWarning { feature: d.feature_names()[j].clone() });
            } else {
                *slot = sum / count as f64;
            }
        }
    }
    let features = d
        .features()
        .iter()
        .enumerate()
        .map(|(cell, &v)| if is_missing(v) { fill[cell % p] } else { v })
        .collect();
    let out = Dataset::new(
        d.ids().to_vec(),
        d.timestamps().to_vec(),
        features,
        d.labels().to_vec(),
        d.feature_names().to_vec(),
    )?;
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::MISSING;

    fn column(values: Vec<f64>) -> Dataset {
        let n = values.len();
        Dataset::new(
            (0..n as u64).collect(),
            (0..n).map(|i| i as f64).collect(),
            values,
            vec![0; n],
            vec!["F1".into()],
        )
        .unwrap()
    }

    #[test]
    fn mean_fill() {
        let (d, w) = impute_missing(&column(vec![1.0, MISSING, 3.0]), ImputeStrategy::ColumnMean).unwrap();
        assert_eq!(d.features(), &[1.0, 2.0, 3.0]);
        assert!(w.is_empty());
    }

    #[test]
    fn no_missing_is_identity() {
        let src = column(vec![1.0, -2.0, 3.5]);
        let (d, _) = impute_missing(&src, ImputeStrategy::ColumnMean).unwrap();
        assert!(d.same_content(&src));
    }

    #[test]
    fn all_missing_falls_back_to_zero() {
        let (d, w) = impute_missing(&column(vec![MISSING; 3]), ImputeStrategy::ColumnMean).unwrap();
        assert_eq!(d.features(), &[0.0, 0.0, 0.0]);
        assert_eq!(w, vec![ImputeWarning { feature: "F1".into() }]);
        let (z, _) = impute_missing(&column(vec![MISSING, 4.0]), ImputeStrategy::Zero).unwrap();
        assert_eq!(z.features(), &[0.0, 4.0]);
    }
}
