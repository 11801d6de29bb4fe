use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Counts of ratings: one row per subject, one column per ordered category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteMatrix {
    categories: Vec<String>,
    counts: Vec<Vec<u32>>,
}

impl VoteMatrix {
    /// Every row needs one count per category and the same rater total (at least 2).
    pub fn new(categories: Vec<String>, counts: Vec<Vec<u32>>) -> Result<Self, MetricsError> {
        let bad = |m: String| Err(MetricsError::InvalidMatrix(m));
        if categories.is_empty() {
            return bad("no categories".into());
        }
        if counts.is_empty() {
            return bad("no subjects".into());
        }
        let k = categories.len();
        let raters: u32 = counts[0].iter().sum();
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return bad(format!("subject {i} has {} counts for {k} categories", row.len()));
            }
            let n: u32 = row.iter().sum();
            if n != raters {
                return bad(format!("subject {i} has {n} ratings, subject 0 has {raters}"));
            }
        }
        if raters < 2 {
            return bad("at least two raters per subject are needed".into());
        }
        Ok(VoteMatrix { categories, counts })
    }

    /// Builds counts from per-subject label lists (category indices).
    pub fn from_labels(k: usize, labels: &[Vec<usize>]) -> Result<Self, MetricsError> {
        let mut counts = Vec::with_capacity(labels.len());
        for l in labels {
            let mut row = vec![0u32; k];
            for &c in l {
                if c >= k {
                    return Err(MetricsError::InvalidMatrix(format!("category {c} out of range 0..{k}")));
                }
                row[c] += 1;
            }
            counts.push(row);
        }
        Self::new((0..k).map(|i| i.to_string()).collect(), counts)
    }

    /// CSV with a header of category names; an optional leading `subject` column is ignored.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, MetricsError> {
        let csv_err = |e: csv::Error| MetricsError::InvalidMatrix(e.to_string());
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let skip = usize::from(header.first().is_some_and(|h| h.eq_ignore_ascii_case("subject")));
        let categories = header[skip..].to_vec();
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .skip(skip)
                .map(|c| c.parse::<u32>().map_err(|e| MetricsError::InvalidMatrix(format!("row {}: `{c}`: {e}", i + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            counts.push(row);
        }
        Self::new(categories, counts)
    }

    pub fn from_csv(path: &Path) -> Result<Self, MetricsError> {
        let f = std::fs::File::open(path)
            .map_err(|e| MetricsError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_csv_reader(f)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn subjects(&self) -> usize {
        self.counts.len()
    }

    pub fn raters(&self) -> u32 {
        self.counts[0].iter().sum()
    }
}

fn linear_weight(i: usize, j: usize, k: usize) -> f64 {
    if k < 2 {
        return 1.0;
    }
    1.0 - (i as f64 - j as f64).abs() / (k - 1) as f64
}

/// Fleiss' Kappa with linear agreement weights `1 - |i-j|/(k-1)`.
pub fn weighted_fleiss_kappa(votes: &VoteMatrix) -> Result<f64, MetricsError> {
    let k = votes.categories.len();
    let n = votes.raters() as f64;
    let subjects = votes.subjects() as f64;
    let w: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| linear_weight(i, j, k)).collect()).collect();

    let mut observed = 0.0;
    let mut marginal = vec![0.0; k];
    for row in &votes.counts {
        let mut agree = 0.0;
        for i in 0..k {
            marginal[i] += row[i] as f64;
            for j in 0..k {
                agree += w[i][j] * row[i] as f64 * row[j] as f64;
            }
        }
        // Drop each rater's pairing with itself.
        observed += (agree - n) / (n * (n - 1.0));
    }
    observed /= subjects;
    for p in &mut marginal {
        *p /= subjects * n;
    }
    let expected: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| w[i][j] * marginal[i] * marginal[j]).sum();
    if (1.0 - expected).abs() < 1e-12 {
        return Err(MetricsError::DegenerateMatrix);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let m = VoteMatrix::from_labels(5, &[vec![0, 0, 0], vec![3, 3, 3], vec![4, 4, 4]]).unwrap();
        assert_eq!(weighted_fleiss_kappa(&m).unwrap(), 1.0);
    }

    #[test]
    fn two_subject_example() {
        let m = VoteMatrix::from_labels(3, &[vec![0, 2], vec![1, 1]]).unwrap();
        assert!((weighted_fleiss_kappa(&m).unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_category_is_degenerate() {
        let m = VoteMatrix::from_labels(3, &[vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(weighted_fleiss_kappa(&m), Err(MetricsError::DegenerateMatrix));
    }

    #[test]
    fn ragged_rejected() {
        assert!(VoteMatrix::from_labels(3, &[vec![0, 2], vec![1]]).is_err());
    }

    #[test]
    fn csv_with_subject_column() {
        let text = "subject,a,b,c\ns1,1,0,1\ns2,0,2,0\n";
        let m = VoteMatrix::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(m.categories(), ["a", "b", "c"]);
        assert_eq!(m.counts(), [vec![1, 0, 1], vec![0, 2, 0]]);
    }
}
