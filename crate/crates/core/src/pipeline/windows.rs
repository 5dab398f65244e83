use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rolling-window geometry in rows. A trading year is 252 rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPlan {
    pub train_days: usize,
    pub val_days: usize,
    pub test_days: usize,
    pub step_days: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        Self {
            train_days: 2772,
            val_days: 756,
            test_days: 252,
            step_days: 252,
        }
    }
}

impl WindowPlan {
    pub fn span(&self) -> usize {
        self.train_days + self.val_days + self.test_days
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_days == 0 || self.val_days == 0 || self.test_days == 0 || self.step_days == 0 {
            return Err(Error::Config(format!("window sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Windows that fit in `n_rows`; zero when the data is too short.
    pub fn n_windows(&self, n_rows: usize) -> usize {
        if n_rows < self.span() || self.step_days == 0 {
            0
        } else {
            (n_rows - self.span()) / self.step_days + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Window `k` starts at row `k * step_days`; windows overrunning the data are
/// dropped.
pub fn split_windows(n_rows: usize, plan: &WindowPlan) -> Result<Vec<Window>> {
    plan.validate()?;
    let n = plan.n_windows(n_rows);
    if n == 0 {
        return Err(Error::TooShort {
            needed: plan.span(),
            got: n_rows,
        });
    }
    Ok((0..n)
        .map(|k| {
            let start = k * plan.step_days;
            let val_start = start + plan.train_days;
            let test_start = val_start + plan.val_days;
            Window {
                index: k,
                train: start..val_start,
                val: val_start..test_start,
                test: test_start..test_start + plan.test_days,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_geometry() {
        let plan = WindowPlan::default();
        assert_eq!(split_windows(6300, &plan).unwrap().len(), 11);
        assert_eq!(split_windows(plan.span(), &plan).unwrap().len(), 1);
        assert!(matches!(
            split_windows(plan.span() - 1, &plan),
            Err(Error::TooShort { .. })
        ));
        let zero = WindowPlan {
            step_days: 0,
            ..plan
        };
        assert!(split_windows(6300, &zero).is_err());
    }

    proptest! {
        #[test]
        fn windows_tile(
            train in 1usize..50, val in 1usize..20, test in 1usize..20,
            step in 1usize..30, extra in 0usize..200,
        ) {
            let plan = WindowPlan { train_days: train, val_days: val, test_days: test, step_days: step };
            let n = plan.span() + extra;
            let ws = split_windows(n, &plan).unwrap();
            prop_assert_eq!(ws.len(), extra / step + 1);
            for (k, w) in ws.iter().enumerate() {
                prop_assert_eq!(w.train.start, k * step);
                prop_assert_eq!(w.train.end, w.val.start);
                prop_assert_eq!(w.val.end, w.test.start);
                prop_assert_eq!(w.train.len(), train);
                prop_assert_eq!(w.val.len(), val);
                prop_assert_eq!(w.test.len(), test);
                prop_assert!(w.test.end <= n);
            }
            // the next window would overrun
            prop_assert!(ws.len() * step + plan.span() > n);
        }
    }
}
