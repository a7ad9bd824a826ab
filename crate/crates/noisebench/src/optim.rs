//! Parameter update rules: plain SGD, the two classical momentum variants,
//! and the Adam family (Adam, Nadam, Adamax), all under one global
//! learning rate.
//!
//! Per-element arithmetic runs in f64 and is rounded back to the parameter
//! scalar type once per update, so trajectories are deterministic and the
//! 64-bit mode reproduces the textbook recurrences exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    SgdNesterov,
    Adam,
    Nadam,
    Adamax,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Sgd,
        OptimizerKind::SgdMomentum,
        OptimizerKind::SgdNesterov,
        OptimizerKind::Adam,
        OptimizerKind::Nadam,
        OptimizerKind::Adamax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::SgdNesterov => "sgd_nesterov",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Adamax => "adamax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown optimizer {s:?}, expected one of {names:?}"))
            })
    }

    /// Number of auxiliary tensors kept per parameter.
    fn slot_count(self) -> usize {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::SgdMomentum | OptimizerKind::SgdNesterov => 1,
            OptimizerKind::Adam | OptimizerKind::Nadam | OptimizerKind::Adamax => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub alpha: f64,
    /// Momentum coefficient for the SGD variants.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, alpha: f64) -> Result<Self> {
        let cfg = OptimizerConfig {
            kind,
            alpha,
            momentum: Self::DEFAULT_MOMENTUM,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
            epsilon: Self::DEFAULT_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        for (name, v) in [
            ("momentum", self.momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Mutable per-run state: update counter plus auxiliary tensors, keyed by
/// parameter name.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState<S: Scalar = f32> {
    step_count: u64,
    slots: BTreeMap<String, Vec<Tensor<S>>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new() -> Self {
        OptimizerState { step_count: 0, slots: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn slots(&self) -> &BTreeMap<String, Vec<Tensor<S>>> {
        &self.slots
    }
}

/// Applies one update to every parameter named in `grads`.
///
/// Every gradient key must exist in `params` with an identical shape;
/// parameters without a gradient entry (batchnorm running buffers) are
/// left untouched. Auxiliary slots are created as zeros on first use.
pub fn step<S: Scalar>(
    config: &OptimizerConfig,
    state: &mut OptimizerState<S>,
    params: &mut BTreeMap<String, Tensor<S>>,
    grads: &BTreeMap<String, Tensor<S>>,
) -> Result<()> {
    config.validate()?;
    for (name, g) in grads {
        let Some(p) = params.get(name) else {
            return Err(Error::invalid(format!("gradient for unknown parameter {name:?}")));
        };
        if p.shape() != g.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match parameter {name:?} shape {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let slots = state.slots.entry(name.clone()).or_default();
        while slots.len() < config.kind.slot_count() {
            slots.push(Tensor::zeros(g.shape()));
        }
        if slots.iter().any(|s| s.shape() != g.shape()) {
            return Err(Error::invalid(format!(
                "stale optimizer slots for {name:?}: shapes changed mid-run"
            )));
        }
    }
    let t = state.step_count + 1;
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let slots = state.slots.get_mut(name).expect("created above");
        update_tensor(config, t, p, g, slots);
    }
    state.step_count = t;
    Ok(())
}

fn update_tensor<S: Scalar>(
    config: &OptimizerConfig,
    t: u64,
    p: &mut Tensor<S>,
    g: &Tensor<S>,
    slots: &mut [Tensor<S>],
) {
    let a = config.alpha;
    let mu = config.momentum;
    let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
    // 0^0 = 1 never arises: t >= 1.
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    match config.kind {
        OptimizerKind::Sgd => {
            for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *w = S::from_f64(w.to_f64() - a * gv.to_f64());
            }
        }
        OptimizerKind::SgdMomentum => {
            let (v, rest) = slots.split_first_mut().expect("one slot");
            debug_assert!(rest.is_empty());
            for ((w, vd), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let vn = mu * vd.to_f64() + gv.to_f64();
                *vd = S::from_f64(vn);
                *w = S::from_f64(w.to_f64() - a * vn);
            }
        }
        OptimizerKind::SgdNesterov => {
            let (v, _) = slots.split_first_mut().expect("one slot");
            for ((w, vd), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let vn = mu * vd.to_f64() + gv.to_f64();
                *vd = S::from_f64(vn);
                *w = S::from_f64(w.to_f64() - a * (mu * vn + gv.to_f64()));
            }
        }
        OptimizerKind::Adam => {
            let (m, rest) = slots.split_first_mut().expect("two slots");
            let v = &mut rest[0];
            for (((w, md), vd), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                let gf = gv.to_f64();
                let mn = b1 * md.to_f64() + (1.0 - b1) * gf;
                let vn = b2 * vd.to_f64() + (1.0 - b2) * gf * gf;
                *md = S::from_f64(mn);
                *vd = S::from_f64(vn);
                let mhat = mn / bc1;
                let vhat = vn / bc2;
                *w = S::from_f64(w.to_f64() - a * mhat / (vhat.sqrt() + eps));
            }
        }
        OptimizerKind::Nadam => {
            let (m, rest) = slots.split_first_mut().expect("two slots");
            let v = &mut rest[0];
            for (((w, md), vd), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                let gf = gv.to_f64();
                let mn = b1 * md.to_f64() + (1.0 - b1) * gf;
                let vn = b2 * vd.to_f64() + (1.0 - b2) * gf * gf;
                *md = S::from_f64(mn);
                *vd = S::from_f64(vn);
                // Nesterov look-ahead on the corrected first moment.
                let mbar = b1 * (mn / bc1) + (1.0 - b1) * gf / bc1;
                let vhat = vn / bc2;
                *w = S::from_f64(w.to_f64() - a * mbar / (vhat.sqrt() + eps));
            }
        }
        OptimizerKind::Adamax => {
            let (m, rest) = slots.split_first_mut().expect("two slots");
            let u = &mut rest[0];
            for (((w, md), ud), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(u.data_mut())
                .zip(g.data())
            {
                let gf = gv.to_f64();
                let mn = b1 * md.to_f64() + (1.0 - b1) * gf;
                let un = (b2 * ud.to_f64()).max(gf.abs());
                *md = S::from_f64(mn);
                *ud = S::from_f64(un);
                *w = S::from_f64(w.to_f64() - a / bc1 * mn / (un + eps));
            }
        }
    }
}

#[cfg(test)]
mod tests;
