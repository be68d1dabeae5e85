use std::str::FromStr;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::loss::GradientRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::adam()),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Moment buffers shaped like the embedding tables (empty for SGD).
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m_user: Vec<f64>,
    v_user: Vec<f64>,
    m_item: Vec<f64>,
    v_item: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, table: &EmbeddingTable) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        let (nu, ni) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Adam { .. } => (table.user.len(), table.item.len()),
        };
        Ok(Self {
            kind,
            lr,
            step: 0,
            m_user: vec![0.0; nu],
            v_user: vec![0.0; nu],
            m_item: vec![0.0; ni],
            v_item: vec![0.0; ni],
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update. SGD touches only the rows present in the record;
    /// Adam updates every parameter (untouched rows see a zero gradient).
    pub fn apply(&mut self, table: &mut EmbeddingTable, rec: &GradientRecord) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                if self.lr == 0.0 {
                    return;
                }
                let d = table.d();
                for &u in rec.touched_users() {
                    let g = rec.user_row(u);
                    table.user[u * d..(u + 1) * d]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(w, g)| *w -= self.lr * g);
                }
                for &i in rec.touched_items() {
                    let g = rec.item_row(i);
                    table.item[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(w, g)| *w -= self.lr * g);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let step = self.lr / c1;
                let adam = |w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                    for k in 0..w.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        w[k] -= step * m[k] / ((v[k] / c2).sqrt() + eps);
                    }
                };
                adam(&mut table.user, &rec.user_grad, &mut self.m_user, &mut self.v_user);
                adam(&mut table.item, &rec.item_grad, &mut self.m_item, &mut self.v_item);
            }
        }
    }
}
