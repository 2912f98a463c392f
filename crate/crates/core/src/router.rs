//! Two-layer MLP router over pooled shared features, plus the three
//! routing strategies: direct argmax, score-threshold fallback and
//! score-difference fallback onto the versatile expert.

use rand_chacha::ChaCha8Rng;

use crate::dataset::DomainLabel;
use crate::error::{MixpertError, Result};
use crate::nncore::{LinearLayer, LrGroup, ParamId, Params, Tape, Var};

pub const NUM_TASK_EXPERTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoutingStrategy {
    Direct,
    ScoreThreshold,
    ScoreDifference,
}

impl RoutingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            RoutingStrategy::Direct => "direct",
            RoutingStrategy::ScoreThreshold => "score-threshold",
            RoutingStrategy::ScoreDifference => "score-difference",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "direct" => Ok(RoutingStrategy::Direct),
            "score-threshold" => Ok(RoutingStrategy::ScoreThreshold),
            "score-difference" => Ok(RoutingStrategy::ScoreDifference),
            other => Err(MixpertError::Config(format!(
                "unknown routing strategy '{other}'"
            ))),
        }
    }
}

/// Strategy plus its thresholds. `tau` gates score-difference routing,
/// `lambda` gates score-threshold routing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingPolicy {
    pub strategy: RoutingStrategy,
    pub tau: f32,
    pub lambda: f32,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        Self {
            strategy: RoutingStrategy::ScoreDifference,
            tau: 0.6,
            lambda: 0.5,
        }
    }
}

impl RoutingPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MixpertError::Config(format!(
                    "{name} must lie in [0,1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Which branch handles an input. Task experts map 1:1 onto domains;
/// the versatile expert is reachable only through fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExpertId {
    Chart,
    Doc,
    Math,
    Ocr,
    General,
    Versatile,
}

impl ExpertId {
    pub const ALL: [ExpertId; 6] = [
        ExpertId::Chart,
        ExpertId::Doc,
        ExpertId::Math,
        ExpertId::Ocr,
        ExpertId::General,
        ExpertId::Versatile,
    ];

    pub fn index(self) -> usize {
        match self {
            ExpertId::Chart => 0,
            ExpertId::Doc => 1,
            ExpertId::Math => 2,
            ExpertId::Ocr => 3,
            ExpertId::General => 4,
            ExpertId::Versatile => 5,
        }
    }

    pub fn from_domain(domain: DomainLabel) -> Self {
        Self::ALL[domain.code() as usize]
    }

    pub fn domain(self) -> Option<DomainLabel> {
        match self {
            ExpertId::Versatile => None,
            other => Some(DomainLabel::ALL[other.index()]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExpertId::Versatile => "versatile",
            other => other.domain().expect("task experts map to domains").name(),
        }
    }
}

/// Per-image routing outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    /// Softmax probabilities over the five task domains.
    pub scores: Vec<f32>,
    pub chosen: ExpertId,
    /// Highest-scoring domain; selects the task head even on fallback.
    pub argmax_domain: DomainLabel,
    pub s_top: f32,
    pub s_second: f32,
    pub s_d: f32,
    pub strategy: RoutingStrategy,
    pub fell_back: bool,
}

/// Lowest index among maximal entries.
pub fn tie_break(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Applies a routing policy to a softmax score vector.
pub fn decide(scores: &[f32], policy: &RoutingPolicy) -> Result<RoutingDecision> {
    if scores.len() != NUM_TASK_EXPERTS {
        return Err(MixpertError::Contract(format!(
            "expected {NUM_TASK_EXPERTS} scores, got {}",
            scores.len()
        )));
    }
    let sum: f64 = scores.iter().map(|&s| s as f64).sum();
    if scores.iter().any(|s| !s.is_finite() || *s < -1e-6) || (sum - 1.0).abs() > 1e-4 {
        return Err(MixpertError::Contract(format!(
            "scores are not a probability vector (sum {sum})"
        )));
    }
    let top = tie_break(scores);
    let s_top = scores[top];
    let s_second = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &s)| s)
        .fold(f32::NEG_INFINITY, f32::max);
    let s_d = s_top - s_second;
    let argmax_domain = DomainLabel::ALL[top];
    let task_expert = ExpertId::from_domain(argmax_domain);
    let (chosen, fell_back) = match policy.strategy {
        RoutingStrategy::Direct => (task_expert, false),
        RoutingStrategy::ScoreThreshold => {
            if s_top >= policy.lambda {
                (task_expert, false)
            } else {
                (ExpertId::Versatile, true)
            }
        }
        RoutingStrategy::ScoreDifference => {
            if s_d >= policy.tau {
                (task_expert, false)
            } else {
                (ExpertId::Versatile, true)
            }
        }
    };
    Ok(RoutingDecision {
        scores: scores.to_vec(),
        chosen,
        argmax_domain,
        s_top,
        s_second,
        s_d,
        strategy: policy.strategy,
        fell_back,
    })
}

/// Two-layer MLP with GELU between; the output layer starts at zero so an
/// untrained router emits exactly uniform scores.
#[derive(Debug, Clone)]
pub struct RouterNet {
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

impl RouterNet {
    pub fn init(ps: &mut Params<f32>, rng: &mut ChaCha8Rng, d_in: usize, hidden: usize) -> Self {
        Self {
            fc1: LinearLayer::init(ps, rng, "router.fc1", d_in, hidden, LrGroup::Router),
            fc2: LinearLayer::init_zero(ps, "router.fc2", hidden, NUM_TASK_EXPERTS, LrGroup::Router),
        }
    }

    pub fn logits(&self, tape: &mut Tape<f32>, ps: &Params<f32>, pooled: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, ps, pooled)?;
        let h = tape.gelu(h)?;
        self.fc2.forward(tape, ps, h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.fc1.param_ids();
        ids.extend(self.fc2.param_ids());
        ids
    }

    pub fn param_count(&self) -> u64 {
        self.fc1.param_count() + self.fc2.param_count()
    }
}

/// Softmax probabilities over the five task domains for a batch of pooled
/// feature rows.
pub fn route_scores(
    tape: &mut Tape<f32>,
    ps: &Params<f32>,
    net: &RouterNet,
    pooled: Var,
) -> Result<Var> {
    let logits = net.logits(tape, ps, pooled)?;
    tape.softmax_rows(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sd_policy(tau: f32) -> RoutingPolicy {
        RoutingPolicy {
            strategy: RoutingStrategy::ScoreDifference,
            tau,
            lambda: 0.5,
        }
    }

    #[test]
    fn zero_router_emits_uniform_scores() {
        let mut ps = Params::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = RouterNet::init(&mut ps, &mut rng, 64, 128);
        let mut tape = Tape::<f32>::new();
        let pooled = tape.leaf((0..64).map(|i| i as f32 * 0.1).collect(), 1, 64);
        let scores = route_scores(&mut tape, &ps, &net, pooled).unwrap();
        for &s in tape.value(scores) {
            assert!((s - 0.2).abs() < 1e-6);
        }
    }

    #[test]
    fn scores_sum_to_one_for_random_inputs() {
        let mut ps = Params::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = RouterNet::init(&mut ps, &mut rng, 64, 128);
        // give the zero output layer some weights so scores are non-uniform
        for v in ps.get_mut(net.fc2.w).data.iter_mut().step_by(7) {
            *v = 0.3;
        }
        for trial in 0..10usize {
            let mut tape = Tape::<f32>::new();
            let pooled = tape.leaf(
                (0..64)
                    .map(|i| ((i * (trial + 3)) % 13) as f32 * 0.21 - 1.0)
                    .collect(),
                1,
                64,
            );
            let scores = route_scores(&mut tape, &ps, &net, pooled).unwrap();
            let sum: f32 = tape.value(scores).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn decide_follows_the_score_difference_rule() {
        let scores = [0.8, 0.05, 0.05, 0.05, 0.05];
        let d = decide(&scores, &sd_policy(0.6)).unwrap();
        assert_eq!(d.chosen, ExpertId::Chart);
        assert!(!d.fell_back);
        assert!((d.s_d - 0.75).abs() < 1e-6);
    }

    #[test]
    fn uniform_scores_fall_back_for_positive_tau() {
        let scores = [0.2f32; 5];
        let d = decide(&scores, &sd_policy(0.1)).unwrap();
        assert_eq!(d.chosen, ExpertId::Versatile);
        assert!(d.fell_back);
        assert_eq!(d.s_d, 0.0);
        assert_eq!(d.argmax_domain, DomainLabel::Chart); // lowest-index tie break
    }

    #[test]
    fn zero_tau_reduces_to_direct() {
        let vectors = [
            [0.2f32, 0.2, 0.2, 0.2, 0.2],
            [0.9, 0.025, 0.025, 0.025, 0.025],
            [0.3, 0.3, 0.2, 0.1, 0.1],
            [0.05, 0.05, 0.4, 0.4, 0.1],
        ];
        for scores in vectors {
            let sd = decide(&scores, &sd_policy(0.0)).unwrap();
            let direct = decide(
                &scores,
                &RoutingPolicy {
                    strategy: RoutingStrategy::Direct,
                    ..RoutingPolicy::default()
                },
            )
            .unwrap();
            assert_eq!(sd.chosen, direct.chosen);
            assert!(!sd.fell_back);
        }
    }

    #[test]
    fn direct_never_picks_versatile() {
        let policy = RoutingPolicy {
            strategy: RoutingStrategy::Direct,
            ..RoutingPolicy::default()
        };
        let d = decide(&[0.2; 5], &policy).unwrap();
        assert_ne!(d.chosen, ExpertId::Versatile);
        assert!(!d.fell_back);
    }

    #[test]
    fn boundary_equality_chooses_the_task_expert() {
        // s_d == tau exactly -> expert, per the >= rule
        let scores = [0.6f32, 0.1, 0.1, 0.1, 0.1];
        let d = decide(&scores, &sd_policy(0.5)).unwrap();
        assert!(!d.fell_back, "s_d == tau must keep the task expert");
        // s_top == lambda exactly -> expert
        let st = decide(
            &scores,
            &RoutingPolicy {
                strategy: RoutingStrategy::ScoreThreshold,
                tau: 0.6,
                lambda: 0.6,
            },
        )
        .unwrap();
        assert!(!st.fell_back);
    }

    #[test]
    fn invalid_probability_vectors_are_rejected() {
        assert!(decide(&[0.5, 0.5, 0.5, 0.5, 0.5], &sd_policy(0.6)).is_err());
        assert!(decide(&[0.5, 0.5], &sd_policy(0.6)).is_err());
        assert!(decide(&[f32::NAN, 0.25, 0.25, 0.25, 0.25], &sd_policy(0.6)).is_err());
    }

    #[test]
    fn tie_break_is_lowest_index_and_permutation_equivariant() {
        assert_eq!(tie_break(&[0.3, 0.3, 0.2, 0.1, 0.1]), 0);
        assert_eq!(tie_break(&[0.2; 5]), 0);
        let v = [0.1f32, 0.5, 0.15, 0.2, 0.05];
        let base = tie_break(&v);
        // rotate and confirm the argmax follows
        let mut rotated = v.to_vec();
        rotated.rotate_right(2);
        assert_eq!(tie_break(&rotated), (base + 2) % 5);
    }

    #[test]
    fn versatile_expert_maps_to_no_domain() {
        assert_eq!(ExpertId::Versatile.index(), 5);
        assert!(ExpertId::Versatile.domain().is_none());
        for d in DomainLabel::ALL {
            assert_eq!(ExpertId::from_domain(d).domain(), Some(d));
        }
    }
}
