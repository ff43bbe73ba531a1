//! L2-regularized hinge loss, local minibatch training and evaluation.
//!
//! Per head `c` the objective is
//! `lambda / 2 ||w_c||^2 + mean_i max(0, 1 - y_ic [x_i; 1] . w_c)`,
//! summed over heads. The regularizer covers the bias entry.

use rand::seq::SliceRandom;

use super::dataset::Dataset;
use super::TrainerError;
use crate::model::{LocalUpdate, ModelVector};
use crate::seed;

fn score(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn check_shape(w: &ModelVector, data: &Dataset) -> Result<(), TrainerError> {
    if w.features() != data.dim() || w.heads() != data.kind().heads() {
        return Err(TrainerError::ShapeMismatch(format!(
            "model has {} heads x {} features, data has {} heads x {} features",
            w.heads(),
            w.features(),
            data.kind().heads(),
            data.dim()
        )));
    }
    Ok(())
}

/// Objective value and a subgradient over `rows` of `data`. A margin of
/// exactly one counts as inactive.
pub fn hinge_loss_and_subgradient(
    w: &ModelVector,
    data: &Dataset,
    rows: &[usize],
    lambda: f64,
) -> Result<(f64, Vec<f64>), TrainerError> {
    check_shape(w, data)?;
    if rows.is_empty() {
        return Err(TrainerError::EmptyBatch);
    }
    let d = data.dim();
    let stride = d + 1;
    let inv = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    let mut g: Vec<f64> = w.as_slice().iter().map(|x| lambda * x).collect();
    for c in 0..w.heads() {
        let wc = w.head(c);
        loss += 0.5 * lambda * wc.iter().map(|x| x * x).sum::<f64>();
        let gc = &mut g[c * stride..(c + 1) * stride];
        let mut hinge = 0.0;
        for &i in rows {
            let x = data.row(i);
            let y = data.target(i, c);
            let margin = y * score(wc, x);
            if margin < 1.0 {
                hinge += 1.0 - margin;
                for (gj, xj) in gc[..d].iter_mut().zip(x) {
                    *gj -= inv * y * xj;
                }
                gc[d] -= inv * y;
            }
        }
        loss += hinge / rows.len() as f64;
    }
    Ok((loss, g))
}

/// Minibatch schedule for one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSchedule {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
}

/// Run `epochs` passes of minibatch subgradient descent from `global` over
/// `rows`, reshuffled each epoch from `seed`; a batch size of at least the
/// local sample count means full-batch steps.
pub fn local_update(
    global: &ModelVector,
    data: &Dataset,
    rows: &[usize],
    schedule: &LocalSchedule,
    seed: u64,
) -> Result<LocalUpdate, TrainerError> {
    check_shape(global, data)?;
    if rows.is_empty() {
        return Err(TrainerError::EmptyLocalData);
    }
    if !(schedule.lr.is_finite() && schedule.lr >= 0.0) {
        return Err(TrainerError::InvalidSchedule(format!("lr must be nonnegative, got {}", schedule.lr)));
    }
    if schedule.batch_size == 0 {
        return Err(TrainerError::InvalidSchedule("batch_size must be at least 1".into()));
    }
    let mut w = global.clone();
    let mut order = rows.to_vec();
    if schedule.lr > 0.0 {
        for epoch in 0..schedule.epochs {
            if schedule.batch_size < order.len() {
                order.shuffle(&mut seed::rng_for(seed, &[epoch as u64]));
            }
            for batch in order.chunks(schedule.batch_size) {
                let (_, g) = hinge_loss_and_subgradient(&w, data, batch, schedule.lambda)?;
                for (wi, gi) in w.as_mut_slice().iter_mut().zip(&g) {
                    *wi -= schedule.lr * gi;
                }
            }
        }
    }
    let delta = w
        .as_slice()
        .iter()
        .zip(global.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    Ok(LocalUpdate {
        delta,
        sample_count: rows.len(),
    })
}

/// Predicted label of row `i`: sign of the score (ties to +1) in binary mode,
/// first maximizing head otherwise.
pub fn predict(w: &ModelVector, data: &Dataset, i: usize) -> i32 {
    let x = data.row(i);
    if w.heads() == 1 {
        if score(w.head(0), x) >= 0.0 {
            1
        } else {
            -1
        }
    } else {
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..w.heads() {
            let s = score(w.head(c), x);
            if s > best.1 {
                best = (c, s);
            }
        }
        best.0 as i32
    }
}

/// Fraction of correctly classified rows.
pub fn evaluate(w: &ModelVector, test: &Dataset) -> Result<f64, TrainerError> {
    check_shape(w, test)?;
    if test.is_empty() {
        return Err(TrainerError::EmptyBatch);
    }
    let correct = (0..test.len()).filter(|&i| predict(w, test, i) == test.label(i)).count();
    Ok(correct as f64 / test.len() as f64)
}
