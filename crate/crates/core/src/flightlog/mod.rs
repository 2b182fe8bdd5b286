//! Persistence of flight logs, estimates and run configuration, and the
//! session split used for training.

pub mod config;
pub mod dataset;
pub mod estimates;

pub use config::{desk_training, load_gains, FusionConfig, PathsConfig, RunConfig, SessionsConfig};
pub use dataset::{read_dataset, read_records, write_dataset, write_records, SCHEMA_VERSION};
pub use estimates::{load_estimates, read_estimates, save_estimates, write_estimates, EstimateMode};

use crate::error::{Error, Result};

/// Whole sessions assigned to each role.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Split sessions in order: a quarter (at least one) each for validation and,
/// given three or more sessions, test; the rest train. Four sessions give
/// 2/1/1, two give 1/1/0.
pub fn split_sessions<T>(sessions: Vec<T>) -> Result<Split<T>> {
    let n = sessions.len();
    if n < 2 {
        return Err(Error::Dataset(format!(
            "at least 2 sessions are needed to split into training and validation, got {n}"
        )));
    }
    let validation = (n / 4).max(1);
    let test = if n >= 3 { (n / 4).max(1) } else { 0 };
    let train = n - validation - test;
    let mut it = sessions.into_iter();
    Ok(Split {
        train: it.by_ref().take(train).collect(),
        validation: it.by_ref().take(validation).collect(),
        test: it.collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: usize) -> (usize, usize, usize) {
        let s = split_sessions((0..n).collect::<Vec<_>>()).unwrap();
        (s.train.len(), s.validation.len(), s.test.len())
    }

    #[test]
    fn four_sessions_split_two_one_one() {
        let s = split_sessions(vec!['a', 'b', 'c', 'd']).unwrap();
        assert_eq!(s.train, vec!['a', 'b']);
        assert_eq!(s.validation, vec!['c']);
        assert_eq!(s.test, vec!['d']);
    }

    #[test]
    fn smaller_and_larger_counts_fall_back_proportionally() {
        assert_eq!(sizes(2), (1, 1, 0));
        assert_eq!(sizes(3), (1, 1, 1));
        assert_eq!(sizes(8), (4, 2, 2));
        for n in 2..40 {
            let (a, b, c) = sizes(n);
            assert_eq!(a + b + c, n);
            assert!(a >= 1 && b >= 1);
        }
    }

    #[test]
    fn a_single_session_is_refused() {
        let err = split_sessions(vec![1]).unwrap_err().to_string();
        assert!(err.contains("at least 2"), "{err}");
    }
}
