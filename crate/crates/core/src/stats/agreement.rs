//! Fleiss' kappa for a fixed number of raters per item.

use super::StatsError;

/// Item-by-category rating counts with a constant number of raters per item.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    counts: Vec<Vec<u32>>,
    raters: u32,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self, StatsError> {
        let first = counts
            .first()
            .ok_or_else(|| StatsError::DegenerateMatrix("no items".into()))?;
        let k = first.len();
        if k < 2 {
            return Err(StatsError::DegenerateMatrix(format!("{k} categories")));
        }
        let raters: u32 = first.iter().sum();
        if raters < 2 {
            return Err(StatsError::DegenerateMatrix(format!("{raters} raters per item")));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != k {
                return Err(StatsError::DegenerateMatrix(format!("row {i} has {} categories", row.len())));
            }
            if row.iter().sum::<u32>() != raters {
                return Err(StatsError::DegenerateMatrix(format!("row {i} does not sum to {raters}")));
            }
        }
        Ok(RatingMatrix { counts, raters })
    }

    /// Tallies per-item ratings against a fixed category list. Ratings not in
    /// `categories` are rejected.
    pub fn from_ratings<T: PartialEq>(items: &[Vec<T>], categories: &[T]) -> Result<Self, StatsError> {
        let counts = items
            .iter()
            .map(|ratings| {
                let mut row = vec![0u32; categories.len()];
                for r in ratings {
                    let j = categories
                        .iter()
                        .position(|c| c == r)
                        .ok_or_else(|| StatsError::DegenerateMatrix("rating outside categories".into()))?;
                    row[j] += 1;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, StatsError>>()?;
        RatingMatrix::new(counts)
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters(&self) -> u32 {
        self.raters
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa, `(P̄ - P̄e) / (1 - P̄e)`. Perfect observed agreement
/// returns exactly 1.0, which also covers the `0/0` case where every rating
/// falls in one category.
pub fn fleiss_kappa(m: &RatingMatrix) -> f64 {
    let n = m.raters as f64;
    let items = m.items() as f64;
    let total = items * n;

    let p_bar = m
        .counts
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| (c as f64).powi(2)).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    if p_bar == 1.0 {
        return 1.0;
    }
    let p_e: f64 = (0..m.categories())
        .map(|j| {
            let col: u32 = m.counts.iter().map(|row| row[j]).sum();
            (col as f64 / total).powi(2)
        })
        .sum();
    (p_bar - p_e) / (1.0 - p_e)
}
