//! Direct optimization against a fixed set of ground-truth boxes.
//!
//! Neither routine is a training loop: [`descend_logits`] moves the raw head
//! outputs themselves, and [`fit_heads`] adjusts only the final 1×1 prediction
//! convolutions over frozen features of one image.

use super::config::DetectorConfig;
use super::loss::{loss_and_gradient, total_loss, LossBreakdown};
use super::network::{Detector, HeadOutput};
use super::targets::assign_targets;
use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::tensor::Tensor;

/// Descent on the logits themselves, one block of channels per loss term.
///
/// The box, objectness and class terms read disjoint channels, so each block
/// is stepped against its own term. Steps follow resilient backpropagation:
/// each logit moves against the sign of its gradient by its own step size,
/// which grows by 1.2 while the sign holds and halves when it flips. The box
/// term needs this. In logit space its size coordinates are far steeper than
/// its center coordinates, and `1 − IoU` has a kink wherever a predicted edge
/// meets a target edge, so a shared step either crawls or oscillates. A step
/// is taken only if it lowers its term by the Armijo margin, halving it up to
/// a few times first, so every term is non-increasing. Step sizes start at
/// `max_step / 10` and never exceed `max_step`.
///
/// Returns the loss before each step and after the last.
pub fn descend_logits(
    outputs: &mut [HeadOutput],
    gts: &[GroundTruth],
    cfg: &DetectorConfig,
    max_step: f64,
    steps: usize,
) -> Result<Vec<LossBreakdown>> {
    const ARMIJO: f64 = 1e-4;
    const HALVINGS: usize = 8;
    const GROW: f64 = 1.2;
    const SHRINK: f64 = 0.5;
    const MIN_STEP: f64 = 1e-9;
    if !(max_step > 0.0 && max_step.is_finite()) {
        return Err(Error::invalid(format!("step size {max_step} must be positive")));
    }
    let assignments = assign_targets(gts, cfg)?;
    let per_anchor = cfg.outputs_per_anchor();
    let mut blocks: [Vec<(usize, usize)>; 3] = Default::default();
    for (k, out) in outputs.iter().enumerate() {
        let plane = out.grid() * out.grid();
        for i in 0..out.tensor.numel() {
            let term = match (i / plane) % per_anchor {
                0..=3 => 0,
                4 => 1,
                _ => 2,
            };
            blocks[term].push((k, i));
        }
    }
    let value = |l: &LossBreakdown, term: usize| match term {
        0 => cfg.loss_weights.coord * l.coord,
        1 => cfg.loss_weights.obj * l.obj,
        _ => cfg.loss_weights.cls * l.cls,
    };
    let mut sizes: Vec<Vec<f64>> = blocks.iter().map(|b| vec![max_step / 10.0; b.len()]).collect();
    let mut previous: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.len()]).collect();

    let mut trace = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, grads) = loss_and_gradient(outputs, &assignments, cfg)?;
        trace.push(loss);
        let mut current = loss;
        for (term, block) in blocks.iter().enumerate() {
            let g: Vec<f64> = block.iter().map(|&(k, i)| grads[k].data()[i] as f64).collect();
            for ((size, prev), &gi) in sizes[term].iter_mut().zip(&mut previous[term]).zip(&g) {
                if gi * *prev > 0.0 {
                    *size = (*size * GROW).min(max_step);
                } else if gi * *prev < 0.0 {
                    *size = (*size * SHRINK).max(MIN_STEP);
                }
                *prev = gi;
            }
            let p: Vec<f64> =
                g.iter().zip(&sizes[term]).map(|(&gi, &d)| -gi.signum() * d * (gi != 0.0) as u8 as f64).collect();
            let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
            if slope == 0.0 {
                continue;
            }
            let x: Vec<f32> = block.iter().map(|&(k, i)| outputs[k].tensor.data()[i]).collect();
            let f0 = value(&current, term);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..HALVINGS {
                for ((&(k, i), &xi), &pi) in block.iter().zip(&x).zip(&p) {
                    outputs[k].tensor.data_mut()[i] = (xi as f64 + alpha * pi) as f32;
                }
                let trial = total_loss(outputs, &assignments, cfg)?;
                if value(&trial, term) <= f0 + ARMIJO * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(trial) => current = trial,
                None => {
                    for (&(k, i), &xi) in block.iter().zip(&x) {
                        outputs[k].tensor.data_mut()[i] = xi;
                    }
                }
            }
            if alpha < 1.0 {
                // the sign rule overshot; carry the shortened step forward
                let scale = if accepted.is_some() { alpha } else { alpha * 2.0 };
                for d in &mut sizes[term] {
                    *d = (*d * scale).max(MIN_STEP);
                }
            }
        }
    }
    trace.push(total_loss(outputs, &assignments, cfg)?);
    Ok(trace)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f64], lr: f64) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        for (i, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            *p -= (lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)) as f32;
        }
    }
}

/// Fits the prediction convolutions of every head to one image with Adam.
///
/// The objectness gradient of the responsible slots is scaled up so that the
/// positives carry as much total weight as all the negatives together;
/// otherwise a single box is drowned out by thousands of background slots.
pub fn fit_heads(
    detector: &mut Detector,
    image: &Tensor,
    gts: &[GroundTruth],
    learning_rate: f64,
    steps: usize,
) -> Result<Vec<LossBreakdown>> {
    if gts.is_empty() {
        return Err(Error::invalid("head fitting needs at least one ground-truth box"));
    }
    let cfg = detector.config.clone();
    let assignments = assign_targets(gts, &cfg)?;
    let features = detector.forward_features(image)?;
    let mut optimizers: Vec<(Adam, Adam)> = detector
        .heads
        .iter()
        .map(|h| (Adam::new(h.predict.weight.numel()), Adam::new(h.predict.bias.as_ref().map_or(0, Tensor::numel))))
        .collect();
    let mut trace = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let outputs = detector.predict(&features)?;
        let (loss, mut grads) = loss_and_gradient(&outputs, &assignments, &cfg)?;
        trace.push(loss);
        let slots: usize = outputs.iter().map(|o| cfg.anchors_per_scale() * o.grid() * o.grid()).sum();
        let boost = (slots / assignments.len()) as f32;
        for a in &assignments {
            let s = outputs[a.scale].grid();
            let idx = ((a.anchor * cfg.outputs_per_anchor() + 4) * s + a.gy) * s + a.gx;
            grads[a.scale].data_mut()[idx] *= boost;
        }
        for ((head, feat), (grad, (opt_w, opt_b))) in
            detector.heads.iter_mut().zip(&features).zip(grads.iter().zip(optimizers.iter_mut()))
        {
            let (c_in, h, w) = feat.chw()?;
            let hw = h * w;
            let c_out = head.predict.out_channels();
            let mut dw = vec![0.0f64; c_out * c_in];
            let mut db = vec![0.0f64; c_out];
            for o in 0..c_out {
                let g = &grad.data()[o * hw..][..hw];
                db[o] = g.iter().map(|&v| v as f64).sum();
                for i in 0..c_in {
                    let f = &feat.data()[i * hw..][..hw];
                    dw[o * c_in + i] = g.iter().zip(f).map(|(&a, &b)| a as f64 * b as f64).sum();
                }
            }
            opt_w.step(head.predict.weight.data_mut(), &dw, learning_rate);
            if let Some(b) = head.predict.bias.as_mut() {
                opt_b.step(b.data_mut(), &db, learning_rate);
            }
        }
    }
    trace.push(loss_and_gradient(&detector.predict(&features)?, &assignments, &cfg)?.0);
    Ok(trace)
}
