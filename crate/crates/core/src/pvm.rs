//! Portfolio-vector memory: row `t` holds the action taken at the end of
//! period `t`.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{check_simplex, PortfolioVector};

/// Row indices touched since logging was enabled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessLog {
    pub reads: Vec<usize>,
    pub writes: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PortfolioVectorMemory {
    periods: usize,
    width: usize,
    data: Vec<f64>,
    #[serde(skip)]
    log: Mutex<Option<AccessLog>>,
}

impl Clone for PortfolioVectorMemory {
    fn clone(&self) -> Self {
        Self {
            periods: self.periods,
            width: self.width,
            data: self.data.clone(),
            log: Mutex::new(None),
        }
    }
}

impl PartialEq for PortfolioVectorMemory {
    fn eq(&self, other: &Self) -> bool {
        self.periods == other.periods && self.width == other.width && self.data == other.data
    }
}

impl PortfolioVectorMemory {
    /// `periods` rows of uniform weights over `m` assets plus cash.
    pub fn new(periods: usize, m: usize) -> Result<Self> {
        if periods == 0 || m == 0 {
            return Err(Error::Validation(format!("memory needs T ≥ 1 and m ≥ 1, got T={periods}, m={m}")));
        }
        let width = m + 1;
        Ok(Self {
            periods,
            width,
            data: vec![1.0 / width as f64; periods * width],
            log: Mutex::new(None),
        })
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn assets(&self) -> usize {
        self.width - 1
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.periods {
            return Err(Error::Index {
                index: t,
                len: self.periods,
            });
        }
        Ok(())
    }

    pub fn row(&self, t: usize) -> Result<&[f64]> {
        self.check(t)?;
        if let Some(log) = self.log.lock().unwrap().as_mut() {
            log.reads.push(t);
        }
        Ok(&self.data[t * self.width..(t + 1) * self.width])
    }

    pub fn read(&self, t: usize) -> Result<PortfolioVector> {
        Ok(PortfolioVector::from_trusted(self.row(t)?.to_vec()))
    }

    pub fn write(&mut self, t: usize, w: &[f64]) -> Result<()> {
        self.check(t)?;
        if w.len() != self.width {
            return Err(Error::Validation(format!("expected {} weights, got {}", self.width, w.len())));
        }
        check_simplex(w)?;
        if let Some(log) = self.log.get_mut().unwrap().as_mut() {
            log.writes.push(t);
        }
        self.data[t * self.width..(t + 1) * self.width].copy_from_slice(w);
        Ok(())
    }

    /// Starts recording row accesses, dropping any previous log.
    pub fn start_logging(&self) {
        *self.log.lock().unwrap() = Some(AccessLog::default());
    }

    pub fn take_log(&self) -> Option<AccessLog> {
        self.log.lock().unwrap().take()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pvm: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if pvm.width < 2 || pvm.data.len() != pvm.periods * pvm.width {
            return Err(Error::Validation("memory file has inconsistent dimensions".into()));
        }
        Ok(pvm)
    }

    /// Mean L1 distance between corresponding rows of two memories.
    pub fn mean_row_change(&self, other: &Self) -> f64 {
        let total: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        total / self.periods as f64
    }
}
