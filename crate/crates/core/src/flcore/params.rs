use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::{AudioModel, Model, MultimodalModel, Topology};
use crate::rng::{derived_rng, stream};

/// Named parameter blocks, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    AudioEncoder,
    VisualEncoder,
    AudioHead,
    FusionHead,
}

impl Block {
    pub const ALL: [Block; 4] = [
        Block::AudioEncoder,
        Block::VisualEncoder,
        Block::AudioHead,
        Block::FusionHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::AudioEncoder => "audio_encoder",
            Block::VisualEncoder => "visual_encoder",
            Block::AudioHead => "audio_head",
            Block::FusionHead => "fusion_head",
        }
    }

    pub fn is_visual(self) -> bool {
        matches!(self, Block::VisualEncoder | Block::FusionHead)
    }

    fn index(self) -> u64 {
        self as u64
    }
}

/// The unit of aggregation and transfer: flat parameter vectors per block.
/// Absent blocks are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub audio_encoder: Option<Vec<f64>>,
    pub visual_encoder: Option<Vec<f64>>,
    pub audio_head: Option<Vec<f64>>,
    pub fusion_head: Option<Vec<f64>>,
}

impl ParamSet {
    pub fn get(&self, block: Block) -> Option<&Vec<f64>> {
        match block {
            Block::AudioEncoder => self.audio_encoder.as_ref(),
            Block::VisualEncoder => self.visual_encoder.as_ref(),
            Block::AudioHead => self.audio_head.as_ref(),
            Block::FusionHead => self.fusion_head.as_ref(),
        }
    }

    pub fn slot(&mut self, block: Block) -> &mut Option<Vec<f64>> {
        match block {
            Block::AudioEncoder => &mut self.audio_encoder,
            Block::VisualEncoder => &mut self.visual_encoder,
            Block::AudioHead => &mut self.audio_head,
            Block::FusionHead => &mut self.fusion_head,
        }
    }

    pub fn require(&self, block: Block) -> Result<&Vec<f64>> {
        self.get(block)
            .ok_or_else(|| Error::InvalidState(format!("parameter set has no {} block", block.name())))
    }

    pub fn blocks(&self) -> impl Iterator<Item = (Block, &Vec<f64>)> {
        Block::ALL.into_iter().filter_map(|b| self.get(b).map(|v| (b, v)))
    }

    pub fn has_visual(&self) -> bool {
        self.visual_encoder.is_some() || self.fusion_head.is_some()
    }

    /// Copy holding only the audio encoder and audio head.
    pub fn audio_view(&self) -> ParamSet {
        ParamSet {
            audio_encoder: self.audio_encoder.clone(),
            audio_head: self.audio_head.clone(),
            ..ParamSet::default()
        }
    }

    /// All blocks concatenated in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().flat_map(|(_, v)| v.iter().copied()).collect()
    }

    pub fn audio_model(&self, topology: &Topology) -> Result<AudioModel> {
        let mut m = AudioModel::new(topology.audio_encoder()?, topology.head()?)?;
        let mut flat = self.require(Block::AudioEncoder)?.clone();
        flat.extend_from_slice(self.require(Block::AudioHead)?);
        m.load_flat(&flat)?;
        Ok(m)
    }

    pub fn multimodal_model(&self, topology: &Topology) -> Result<MultimodalModel> {
        let mut m = MultimodalModel::new(
            topology.audio_encoder()?,
            topology.visual_encoder()?,
            topology.fusion_head()?,
        )?;
        let mut flat = self.require(Block::AudioEncoder)?.clone();
        flat.extend_from_slice(self.require(Block::VisualEncoder)?);
        flat.extend_from_slice(self.require(Block::FusionHead)?);
        m.load_flat(&flat)?;
        Ok(m)
    }

    pub fn set_audio_model(&mut self, model: &AudioModel) {
        self.audio_encoder = Some(model.encoder.to_flat());
        self.audio_head = Some(model.head.to_flat());
    }

    pub fn set_multimodal_model(&mut self, model: &MultimodalModel) {
        self.audio_encoder = Some(model.audio_encoder.to_flat());
        self.visual_encoder = Some(model.visual_encoder.to_flat());
        self.fusion_head = Some(model.fusion_head.to_flat());
    }

    /// Checks block lengths against a topology.
    pub fn check_shapes(&self, topology: &Topology) -> Result<()> {
        for (block, v) in self.blocks() {
            let expected = block_len(topology, block)?;
            if v.len() != expected {
                return Err(Error::InvalidState(format!(
                    "{} block has {} parameters, topology needs {expected}",
                    block.name(),
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn block_len(topology: &Topology, block: Block) -> Result<usize> {
    Ok(match block {
        Block::AudioEncoder => topology.audio_encoder()?.num_params(),
        Block::VisualEncoder => topology.visual_encoder()?.num_params(),
        Block::AudioHead => topology.head()?.num_params(),
        Block::FusionHead => topology.fusion_head()?.num_params(),
    })
}

/// Glorot-initialized block, seeded by `(seed, salt, block)`.
pub fn init_block(topology: &Topology, block: Block, seed: u64, salt: u64) -> Result<Vec<f64>> {
    let mut rng = derived_rng(seed, &[stream::INIT, salt, block.index()]);
    let net = match block {
        Block::AudioEncoder => topology.glorot_audio_encoder(&mut rng)?,
        Block::VisualEncoder => topology.glorot_visual_encoder(&mut rng)?,
        Block::AudioHead => topology.glorot_head(&mut rng)?,
        Block::FusionHead => topology.glorot_fusion_head(&mut rng)?,
    };
    Ok(net.to_flat())
}

/// Initial global parameters with all four blocks. Every strategy starts
/// from these same values for a given seed.
pub fn init_params(topology: &Topology, seed: u64) -> Result<ParamSet> {
    let mut p = ParamSet::default();
    for block in Block::ALL {
        *p.slot(block) = Some(init_block(topology, block, seed, 0)?);
    }
    Ok(p)
}
