//! Run configuration: architecture, optimizer, corpus and experiment
//! settings, serialized as plain `key = value` lines. The emitted text is
//! canonical (fixed key order) so it doubles as the cache-hash input.

use crate::dataset::{DatasetManifest, DomainLabel};
use crate::encoder::EncoderConfig;
use crate::error::{MixpertError, Result};
use crate::router::{RoutingPolicy, RoutingStrategy};

/// Full architectural description of one model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixpertConfig {
    pub encoder: EncoderConfig,
    pub router_hidden: usize,
    /// All task heads share one output width (the largest task's class
    /// count) so activated-parameter counts do not depend on which head
    /// runs. Labels always fall inside the head's leading classes.
    pub head_classes: usize,
    pub policy: RoutingPolicy,
}

impl Default for MixpertConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            router_hidden: 128,
            head_classes: DomainLabel::ALL
                .iter()
                .map(|d| d.task_classes())
                .max()
                .expect("five domains"),
            policy: RoutingPolicy::default(),
        }
    }
}

impl MixpertConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.policy.validate()?;
        let needed = DomainLabel::ALL
            .iter()
            .map(|d| d.task_classes())
            .max()
            .expect("five domains");
        if self.head_classes < needed {
            return Err(MixpertError::Config(format!(
                "head_classes {} below the largest task ({needed})",
                self.head_classes
            )));
        }
        Ok(())
    }
}

/// AdamW and schedule settings. Peak learning rates are per parameter
/// group; the projector group runs 5x the encoder group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub weight_decay: f32,
    pub warmup_fraction: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoder: f32,
    pub lr_projector: f32,
    pub lr_expert_block: f32,
    pub lr_router: f32,
    pub lr_head: f32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: 0.01,
            warmup_fraction: 0.03,
            batch_size: 64,
            epochs: 1,
            lr_encoder: 2e-4,
            lr_projector: 1e-3,
            lr_expert_block: 1e-3,
            lr_router: 1e-3,
            lr_head: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(MixpertError::Config(format!(
                "betas must satisfy 0 < b1 < b2 < 1, got {} {}",
                self.beta1, self.beta2
            )));
        }
        if !(0.0..=0.5).contains(&self.warmup_fraction) {
            return Err(MixpertError::Config(format!(
                "warmup_fraction must lie in [0, 0.5], got {}",
                self.warmup_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(MixpertError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }
}

/// Experiment-driver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub layer_scan_values: Vec<usize>,
    pub router_data_sizes: Vec<usize>,
    pub tau_sweep: Vec<f32>,
    /// Mixed evaluation set: pure test samples per domain plus the whole
    /// ambiguous split, sized 80/20.
    pub eval_pure_per_domain: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            layer_scan_values: vec![0, 1, 2, 4, 6],
            router_data_sizes: vec![1000, 2500, 5000],
            tau_sweep: vec![0.1, 0.3, 0.5, 0.6, 0.7],
            eval_pure_per_domain: 800,
        }
    }
}

/// Training-phase epoch counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    pub joint_epochs: usize,
    pub expert_epochs: usize,
    pub router_epochs: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            joint_epochs: 5,
            expert_epochs: 1,
            router_epochs: 1,
        }
    }
}

/// Everything one run needs, parsed from a single config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: MixpertConfig,
    pub opt: OptimizerConfig,
    pub phases: PhaseConfig,
    pub data: DatasetManifest,
    pub exp: ExperimentConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.opt.validate()
    }

    /// Canonical text form; also the cache-hash input.
    pub fn to_text(&self) -> String {
        let e = &self.model.encoder;
        let o = &self.opt;
        let x = &self.exp;
        let join_us = |v: &[usize]| {
            v.iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let seeds = x
            .seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let taus = x
            .tau_sweep
            .iter()
            .map(|t| format!("{t}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "encoder.total_layers = {}\n\
             encoder.shared_layers = {}\n\
             encoder.embed_dim = {}\n\
             encoder.heads = {}\n\
             encoder.mlp_ratio = {}\n\
             encoder.patch_size = {}\n\
             encoder.image_size = {}\n\
             encoder.channels = {}\n\
             encoder.projector_hidden = {}\n\
             encoder.projector_out = {}\n\
             router.hidden = {}\n\
             head.classes = {}\n\
             routing.strategy = {}\n\
             routing.tau = {}\n\
             routing.lambda = {}\n\
             opt.beta1 = {}\n\
             opt.beta2 = {}\n\
             opt.weight_decay = {}\n\
             opt.warmup_fraction = {}\n\
             opt.batch_size = {}\n\
             opt.lr_encoder = {}\n\
             opt.lr_projector = {}\n\
             opt.lr_expert_block = {}\n\
             opt.lr_router = {}\n\
             opt.lr_head = {}\n\
             phases.joint_epochs = {}\n\
             phases.expert_epochs = {}\n\
             phases.router_epochs = {}\n\
             data.seed = {}\n\
             data.train_per_domain = {}\n\
             data.val_per_domain = {}\n\
             data.test_per_domain = {}\n\
             data.ambiguous_count = {}\n\
             data.ambiguous_mix_lo = {}\n\
             data.ambiguous_mix_hi = {}\n\
             exp.seeds = {}\n\
             exp.layer_scan_values = {}\n\
             exp.router_data_sizes = {}\n\
             exp.tau_sweep = {}\n\
             exp.eval_pure_per_domain = {}\n",
            e.total_layers,
            e.shared_layers,
            e.embed_dim,
            e.heads,
            e.mlp_ratio,
            e.patch_size,
            e.image_size,
            e.channels,
            e.projector_hidden,
            e.projector_out,
            self.model.router_hidden,
            self.model.head_classes,
            self.model.policy.strategy.name(),
            self.model.policy.tau,
            self.model.policy.lambda,
            o.beta1,
            o.beta2,
            o.weight_decay,
            o.warmup_fraction,
            o.batch_size,
            o.lr_encoder,
            o.lr_projector,
            o.lr_expert_block,
            o.lr_router,
            o.lr_head,
            self.phases.joint_epochs,
            self.phases.expert_epochs,
            self.phases.router_epochs,
            self.data.seed,
            self.data.train_per_domain,
            self.data.val_per_domain,
            self.data.test_per_domain,
            self.data.ambiguous_count,
            self.data.ambiguous_mix_lo,
            self.data.ambiguous_mix_hi,
            seeds,
            join_us(&x.layer_scan_values),
            join_us(&x.router_data_sizes),
            taus,
            x.eval_pure_per_domain,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(MixpertError::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| MixpertError::Config(format!("bad value '{value}' for {key}")))
        }
        fn plist_us(key: &str, value: &str) -> Result<Vec<usize>> {
            value.split(',').map(|v| p(key, v.trim())).collect()
        }
        let e = &mut self.model.encoder;
        match key {
            "encoder.total_layers" => e.total_layers = p(key, value)?,
            "encoder.shared_layers" => e.shared_layers = p(key, value)?,
            "encoder.embed_dim" => e.embed_dim = p(key, value)?,
            "encoder.heads" => e.heads = p(key, value)?,
            "encoder.mlp_ratio" => e.mlp_ratio = p(key, value)?,
            "encoder.patch_size" => e.patch_size = p(key, value)?,
            "encoder.image_size" => e.image_size = p(key, value)?,
            "encoder.channels" => e.channels = p(key, value)?,
            "encoder.projector_hidden" => e.projector_hidden = p(key, value)?,
            "encoder.projector_out" => e.projector_out = p(key, value)?,
            "router.hidden" => self.model.router_hidden = p(key, value)?,
            "head.classes" => self.model.head_classes = p(key, value)?,
            "routing.strategy" => self.model.policy.strategy = RoutingStrategy::from_name(value)?,
            "routing.tau" => self.model.policy.tau = p(key, value)?,
            "routing.lambda" => self.model.policy.lambda = p(key, value)?,
            "opt.beta1" => self.opt.beta1 = p(key, value)?,
            "opt.beta2" => self.opt.beta2 = p(key, value)?,
            "opt.weight_decay" => self.opt.weight_decay = p(key, value)?,
            "opt.warmup_fraction" => self.opt.warmup_fraction = p(key, value)?,
            "opt.batch_size" => self.opt.batch_size = p(key, value)?,
            "opt.lr_encoder" => self.opt.lr_encoder = p(key, value)?,
            "opt.lr_projector" => self.opt.lr_projector = p(key, value)?,
            "opt.lr_expert_block" => self.opt.lr_expert_block = p(key, value)?,
            "opt.lr_router" => self.opt.lr_router = p(key, value)?,
            "opt.lr_head" => self.opt.lr_head = p(key, value)?,
            "phases.joint_epochs" => self.phases.joint_epochs = p(key, value)?,
            "phases.expert_epochs" => self.phases.expert_epochs = p(key, value)?,
            "phases.router_epochs" => self.phases.router_epochs = p(key, value)?,
            "data.seed" => self.data.seed = p(key, value)?,
            "data.train_per_domain" => self.data.train_per_domain = p(key, value)?,
            "data.val_per_domain" => self.data.val_per_domain = p(key, value)?,
            "data.test_per_domain" => self.data.test_per_domain = p(key, value)?,
            "data.ambiguous_count" => self.data.ambiguous_count = p(key, value)?,
            "data.ambiguous_mix_lo" => self.data.ambiguous_mix_lo = p(key, value)?,
            "data.ambiguous_mix_hi" => self.data.ambiguous_mix_hi = p(key, value)?,
            "exp.seeds" => {
                self.exp.seeds = value
                    .split(',')
                    .map(|v| p::<u64>(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "exp.layer_scan_values" => self.exp.layer_scan_values = plist_us(key, value)?,
            "exp.router_data_sizes" => self.exp.router_data_sizes = plist_us(key, value)?,
            "exp.tau_sweep" => {
                self.exp.tau_sweep = value
                    .split(',')
                    .map(|v| p::<f32>(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "exp.eval_pure_per_domain" => self.exp.eval_pure_per_domain = p(key, value)?,
            other => {
                return Err(MixpertError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_text() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_and_comments_parse() {
        let text = "# comment\nencoder.shared_layers = 2\nrouting.strategy = direct\nexp.seeds = 7, 8\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.model.encoder.shared_layers, 2);
        assert_eq!(cfg.model.policy.strategy, RoutingStrategy::Direct);
        assert_eq!(cfg.exp.seeds, vec![7, 8]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_text("nope = 1\n").is_err());
        assert!(RunConfig::from_text("encoder.heads = banana\n").is_err());
        // invalid split must fail validation
        assert!(RunConfig::from_text("encoder.shared_layers = 9\n").is_err());
    }
}
