use chrono::NaiveDate;

use super::Article;

/// Chronological split boundaries. Articles dated on or after `test_start`
/// go to test, on or after `dev_start` to dev, everything earlier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBoundaries {
    pub dev_start: NaiveDate,
    pub test_start: NaiveDate,
}

impl Default for SplitBoundaries {
    fn default() -> Self {
        SplitBoundaries {
            dev_start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            test_start: NaiveDate::from_ymd_opt(2022, 7, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Article>,
    pub dev: Vec<Article>,
    pub test: Vec<Article>,
}

/// Partition articles by publish date, preserving input order within each split.
pub fn split_corpus(articles: &[Article], bounds: SplitBoundaries) -> CorpusSplit {
    let mut split = CorpusSplit::default();
    for a in articles {
        let bucket = if a.publish_date >= bounds.test_start {
            &mut split.test
        } else if a.publish_date >= bounds.dev_start {
            &mut split.dev
        } else {
            &mut split.train
        };
        bucket.push(a.clone());
    }
    split
}
