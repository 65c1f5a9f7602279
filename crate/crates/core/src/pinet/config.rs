use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{DEFAULT_NUM_JOINTS, DEFAULT_ROOT_INDEX};

/// How interactees follow the person-of-interest in the recurrent input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrderMode {
    /// Nearest interactee first.
    #[default]
    Intuitive,
    /// Farthest interactee first.
    Reverse,
    /// Interactees in a pseudo-random order seeded by the person-of-interest id.
    Random,
}

impl OrderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderMode::Intuitive => "intuitive",
            OrderMode::Reverse => "reverse",
            OrderMode::Random => "random",
        }
    }
}

impl std::str::FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intuitive" => Ok(OrderMode::Intuitive),
            "reverse" => Ok(OrderMode::Reverse),
            "random" => Ok(OrderMode::Random),
            other => Err(Error::InvalidConfig(format!("unknown order mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_joints: usize,
    pub hidden: usize,
    pub gru_layers: usize,
    /// Widths of the hidden head layers between the embedding and the pose.
    pub mlp_hidden: Vec<usize>,
    pub use_attention: bool,
    pub bidirectional: bool,
    pub predict_residual: bool,
    /// Feed every pose relative to its joint centroid and re-anchor the
    /// output at the input centroid.
    pub center_poses: bool,
    pub root_index: usize,
    pub order: OrderMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_joints: DEFAULT_NUM_JOINTS,
            hidden: 256,
            gru_layers: 3,
            mlp_hidden: vec![512, 256],
            use_attention: true,
            bidirectional: true,
            predict_residual: false,
            center_poses: false,
            root_index: DEFAULT_ROOT_INDEX,
            order: OrderMode::Intuitive,
        }
    }
}

impl ModelConfig {
    /// Flattened pose width, 3J.
    pub fn input_dim(&self) -> usize {
        3 * self.num_joints
    }

    /// Embedding width E: 2H when bidirectional, H otherwise.
    pub fn embed_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    /// `[E, hidden..., 3J]`.
    pub fn mlp_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.embed_dim()];
        dims.extend(&self.mlp_hidden);
        dims.push(self.input_dim());
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_joints == 0 {
            return bad("num_joints must be positive");
        }
        if self.hidden == 0 || self.gru_layers == 0 {
            return bad("hidden size and GRU depth must be positive");
        }
        if self.mlp_hidden.contains(&0) {
            return bad("head layer widths must be positive");
        }
        if self.root_index >= self.num_joints {
            return bad("root_index must name a joint");
        }
        Ok(())
    }
}
