use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::write_atomic;
use crate::error::{Error, Result};

/// Per-step loss values, written as `step,loss_name,value` CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    rows: Vec<(usize, String, f64)>,
}

impl LossLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a value, failing on NaN or infinity.
    pub fn record(&mut self, step: usize, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                name: name.to_owned(),
                step,
                value,
            });
        }
        self.rows.push((step, name.to_owned(), value));
        Ok(())
    }

    pub fn rows(&self) -> &[(usize, String, f64)] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of one loss in step order.
    pub fn series(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.1 == name)
            .map(|r| r.2)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,loss_name,value\n");
        for (step, name, value) in &self.rows {
            let _ = writeln!(s, "{step},{name},{value}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let mut log = LossLog::new();
        log.record(0, "g_adv", 0.5).unwrap();
        let err = log.record(1, "g_l1", f64::NAN).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 1, .. }));
        assert_eq!(log.to_csv(), "step,loss_name,value\n0,g_adv,0.5\n");
    }
}
