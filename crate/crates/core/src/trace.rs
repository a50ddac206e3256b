//! Per-epoch training trace shared by both models.

use serde::{Deserialize, Serialize};

/// One trace entry. Epoch 0 is the untrained baseline; MSE values are in
/// physical units, (m/s)^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<TraceEpoch>,
    /// Epoch whose weights were returned (lowest validation MSE).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn best_validation_mse(&self) -> f64 {
        self.epochs[self.best_epoch].validation_mse
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,validation_mse\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{}\n",
                e.epoch, e.train_mse, e.validation_mse
            ));
        }
        out
    }
}
