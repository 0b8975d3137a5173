//! Network shapes shared by the agents: an observation trunk with an
//! optional recurrent forecast encoder, topped with either policy+value
//! heads or a single head of action values/logits.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::forecast::{ForecastMode, HORIZON};
use crate::neural::{Gru, GruCache, GruSpec, Mlp, MlpCache, MlpSpec, ParamTensor, Parameterized};

/// How an observation vector splits between the dense trunk and the
/// recurrent block encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    /// Leading features consumed by the dense trunk.
    pub trunk_dim: usize,
    /// Channels of the trailing horizon x channels forecast block, if any.
    pub gru_channels: Option<usize>,
}

impl ObsLayout {
    pub fn battery() -> Self {
        Self { trunk_dim: crate::battery::BATTERY_OBS_DIM, gru_channels: None }
    }

    pub fn heater(mode: Option<ForecastMode>) -> Self {
        match mode {
            None => Self { trunk_dim: crate::heater::HEATER_BASE_OBS_DIM, gru_channels: None },
            Some(m) => Self {
                // Base features plus the two planning scalars feed the trunk.
                trunk_dim: crate::heater::HEATER_BASE_OBS_DIM + 2,
                gru_channels: Some(m.channels()),
            },
        }
    }

    pub fn bandit() -> Self {
        Self { trunk_dim: 1, gru_channels: None }
    }

    pub fn total_dim(&self) -> usize {
        self.trunk_dim + self.gru_channels.map_or(0, |c| c * HORIZON)
    }
}

/// Dense trunk (2 tanh layers) plus, when forecast-aware, a GRU over the
/// block whose final hidden state is concatenated to the trunk output.
#[derive(Debug, Clone)]
pub struct TrunkNet {
    pub layout: ObsLayout,
    pub trunk: Mlp,
    pub gru: Option<Gru>,
}

#[derive(Debug, Clone)]
pub struct TrunkCache {
    mlp: MlpCache,
    gru: Option<GruCache>,
    pub features: Vec<f64>,
}

impl TrunkNet {
    pub fn new(
        layout: ObsLayout,
        hidden: usize,
        gru_hidden: usize,
        gru_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let trunk = Mlp::new(
            "trunk",
            MlpSpec::new(&[layout.trunk_dim, hidden, hidden], true),
            2.0f64.sqrt(),
            rng,
        );
        let gru = layout
            .gru_channels
            .map(|c| Gru::new("encoder", GruSpec::new(c, gru_hidden, gru_dropout), 1.0, rng));
        Self { layout, trunk, gru }
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk.spec.output_dim() + self.gru.as_ref().map_or(0, |g| g.spec.hidden_size)
    }

    pub fn forward(&self, obs: &[f64], dropout_mask: Option<&[f64]>) -> Result<TrunkCache> {
        let (trunk_out, mlp) = self.trunk.forward(&obs[..self.layout.trunk_dim])?;
        let mut features = trunk_out;
        let gru = match &self.gru {
            None => None,
            Some(g) => {
                let (h, cache) = g.forward(&obs[self.layout.trunk_dim..], dropout_mask)?;
                features.extend_from_slice(&h);
                Some(cache)
            }
        };
        Ok(TrunkCache { mlp, gru, features })
    }

    pub fn backward(&mut self, cache: &TrunkCache, d_features: &[f64]) {
        let split = self.trunk.spec.output_dim();
        self.trunk.backward(&cache.mlp, &d_features[..split]);
        if let (Some(g), Some(gc)) = (&mut self.gru, &cache.gru) {
            g.backward(gc, &d_features[split..]);
        }
    }

    pub fn sample_dropout_mask(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        self.gru.as_ref().and_then(|g| {
            if g.spec.dropout_rate > 0.0 {
                Some(g.sample_dropout_mask(rng))
            } else {
                None
            }
        })
    }

    fn arch_string(&self) -> String {
        let gru = match &self.gru {
            None => "none".to_string(),
            Some(g) => format!("{}x{}", g.spec.input_size, g.spec.hidden_size),
        };
        format!(
            "trunk={}-{}|gru={gru}",
            self.layout.trunk_dim,
            self.trunk.spec.output_dim()
        )
    }
}

impl Parameterized for TrunkNet {
    fn num_tensors(&self) -> usize {
        self.trunk.num_tensors() + self.gru.as_ref().map_or(0, |g| g.num_tensors())
    }

    fn tensor(&self, i: usize) -> &ParamTensor {
        let n = self.trunk.num_tensors();
        if i < n {
            self.trunk.tensor(i)
        } else {
            self.gru.as_ref().unwrap().tensor(i - n)
        }
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        let n = self.trunk.num_tensors();
        if i < n {
            self.trunk.tensor_mut(i)
        } else {
            self.gru.as_mut().unwrap().tensor_mut(i - n)
        }
    }
}

/// Policy logits + state value over shared features.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub core: TrunkNet,
    actor_w: ParamTensor,
    actor_b: ParamTensor,
    critic_w: ParamTensor,
    critic_b: ParamTensor,
}

#[derive(Debug, Clone)]
pub struct AcCache {
    core: TrunkCache,
}

impl ActorCritic {
    pub fn new(
        layout: ObsLayout,
        hidden: usize,
        gru_hidden: usize,
        gru_dropout: f64,
        n_actions: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let core = TrunkNet::new(layout, hidden, gru_hidden, gru_dropout, rng);
        let feat = core.feature_dim();
        let mut actor_w = ParamTensor::uniform("actor.w", n_actions, feat, 1.0, rng);
        actor_w.scale_values(0.01); // keep the initial policy near-uniform
        let actor_b = ParamTensor::zeros("actor.b", n_actions, 1);
        let critic_w = ParamTensor::uniform("critic.w", 1, feat, 1.0, rng);
        let critic_b = ParamTensor::zeros("critic.b", 1, 1);
        Self { core, actor_w, actor_b, critic_w, critic_b }
    }

    pub fn n_actions(&self) -> usize {
        self.actor_w.rows
    }

    pub fn forward(
        &self,
        obs: &[f64],
        dropout_mask: Option<&[f64]>,
    ) -> Result<(Vec<f64>, f64, AcCache)> {
        let core = self.core.forward(obs, dropout_mask)?;
        let mut logits = self.actor_b.values.clone();
        self.actor_w.matvec_into(&core.features, &mut logits);
        let mut value = self.critic_b.values.clone();
        self.critic_w.matvec_into(&core.features, &mut value);
        Ok((logits, value[0], AcCache { core }))
    }

    pub fn backward(&mut self, cache: &AcCache, d_logits: &[f64], d_value: f64) {
        let feat = &cache.core.features;
        self.actor_w.accumulate_outer(d_logits, feat);
        self.actor_b.accumulate_bias(d_logits);
        self.critic_w.accumulate_outer(&[d_value], feat);
        self.critic_b.accumulate_bias(&[d_value]);
        let mut d_feat = vec![0.0; feat.len()];
        self.actor_w.matvec_transpose_into(d_logits, &mut d_feat);
        self.critic_w.matvec_transpose_into(&[d_value], &mut d_feat);
        self.core.backward(&cache.core, &d_feat);
    }

    pub fn arch_string(&self) -> String {
        format!("actor-critic|{}|actions={}", self.core.arch_string(), self.n_actions())
    }
}

impl Parameterized for ActorCritic {
    fn num_tensors(&self) -> usize {
        self.core.num_tensors() + 4
    }

    fn tensor(&self, i: usize) -> &ParamTensor {
        let n = self.core.num_tensors();
        match i.checked_sub(n) {
            None => self.core.tensor(i),
            Some(0) => &self.actor_w,
            Some(1) => &self.actor_b,
            Some(2) => &self.critic_w,
            Some(3) => &self.critic_b,
            _ => panic!("tensor index out of range"),
        }
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        let n = self.core.num_tensors();
        match i.checked_sub(n) {
            None => self.core.tensor_mut(i),
            Some(0) => &mut self.actor_w,
            Some(1) => &mut self.actor_b,
            Some(2) => &mut self.critic_w,
            Some(3) => &mut self.critic_b,
            _ => panic!("tensor index out of range"),
        }
    }
}

/// Trunk plus a single linear head: Q-values, or SAC actor logits.
#[derive(Debug, Clone)]
pub struct HeadNet {
    pub core: TrunkNet,
    w: ParamTensor,
    b: ParamTensor,
    role: &'static str,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    core: TrunkCache,
}

impl HeadNet {
    pub fn new(
        role: &'static str,
        layout: ObsLayout,
        hidden: usize,
        gru_hidden: usize,
        gru_dropout: f64,
        out_dim: usize,
        output_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let core = TrunkNet::new(layout, hidden, gru_hidden, gru_dropout, rng);
        let feat = core.feature_dim();
        let mut w = ParamTensor::uniform(&format!("{role}.w"), out_dim, feat, 1.0, rng);
        if output_scale != 1.0 {
            w.scale_values(output_scale);
        }
        let b = ParamTensor::zeros(&format!("{role}.b"), out_dim, 1);
        Self { core, w, b, role }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(
        &self,
        obs: &[f64],
        dropout_mask: Option<&[f64]>,
    ) -> Result<(Vec<f64>, HeadCache)> {
        let core = self.core.forward(obs, dropout_mask)?;
        let mut out = self.b.values.clone();
        self.w.matvec_into(&core.features, &mut out);
        Ok((out, HeadCache { core }))
    }

    pub fn backward(&mut self, cache: &HeadCache, d_out: &[f64]) {
        let feat = &cache.core.features;
        self.w.accumulate_outer(d_out, feat);
        self.b.accumulate_bias(d_out);
        let mut d_feat = vec![0.0; feat.len()];
        self.w.matvec_transpose_into(d_out, &mut d_feat);
        self.core.backward(&cache.core, &d_feat);
    }

    pub fn arch_string(&self) -> String {
        format!("{}|{}|out={}", self.role, self.core.arch_string(), self.out_dim())
    }
}

impl Parameterized for HeadNet {
    fn num_tensors(&self) -> usize {
        self.core.num_tensors() + 2
    }

    fn tensor(&self, i: usize) -> &ParamTensor {
        let n = self.core.num_tensors();
        match i.checked_sub(n) {
            None => self.core.tensor(i),
            Some(0) => &self.w,
            Some(1) => &self.b,
            _ => panic!("tensor index out of range"),
        }
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        let n = self.core.num_tensors();
        match i.checked_sub(n) {
            None => self.core.tensor_mut(i),
            Some(0) => &mut self.w,
            Some(1) => &mut self.b,
            _ => panic!("tensor index out of range"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layouts() {
        assert_eq!(ObsLayout::battery().total_dim(), 5);
        assert_eq!(ObsLayout::heater(None).total_dim(), 8);
        let fa = ObsLayout::heater(Some(ForecastMode::One));
        assert_eq!(fa.trunk_dim, 10);
        assert_eq!(fa.total_dim(), 58);
        assert_eq!(ObsLayout::heater(Some(ForecastMode::All)).total_dim(), 154);
    }

    #[test]
    fn actor_critic_shapes_and_determinism() {
        let layout = ObsLayout::heater(Some(ForecastMode::One));
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = ActorCritic::new(layout, 64, 32, 0.0, 2, &mut r1);
        let b = ActorCritic::new(layout, 64, 32, 0.0, 2, &mut r2);
        let obs = vec![0.1; layout.total_dim()];
        let (la, va, _) = a.forward(&obs, None).unwrap();
        let (lb, vb, _) = b.forward(&obs, None).unwrap();
        assert_eq!(la, lb);
        assert_eq!(va, vb);
        assert_eq!(la.len(), 2);
    }

    #[test]
    fn head_net_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = HeadNet::new("q", ObsLayout::battery(), 64, 32, 0.0, 3, 1.0, &mut rng);
        let (q, _) = net.forward(&vec![0.2; 5], None).unwrap();
        assert_eq!(q.len(), 3);
    }
}
