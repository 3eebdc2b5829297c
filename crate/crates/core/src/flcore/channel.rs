use serde::{Deserialize, Serialize};

use super::client::ClientSpec;
use super::params::ParamSet;
use crate::datagen::Modality;

/// Counters over everything that crossed the simulated server/client link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelAudit {
    pub downlink_messages: usize,
    pub uplink_messages: usize,
    /// Deliveries of visual or fusion parameters to an audio-only client.
    pub visual_to_audio_only: usize,
    /// Client updates folded into the reported audio model, by sender modality.
    pub audio_model_from_audio_only: usize,
    pub audio_model_from_multimodal: usize,
}

impl ChannelAudit {
    /// Hands `payload` to `client`, recording any modality leak.
    pub fn deliver(&mut self, client: &ClientSpec, payload: ParamSet) -> ParamSet {
        self.downlink_messages += 1;
        if client.modality == Modality::AudioOnly && payload.has_visual() {
            self.visual_to_audio_only += 1;
        }
        payload
    }

    pub fn receive(&mut self, n: usize) {
        self.uplink_messages += n;
    }

    pub fn credit_audio_model(&mut self, modality: Modality, n: usize) {
        match modality {
            Modality::AudioOnly => self.audio_model_from_audio_only += n,
            Modality::Multimodal => self.audio_model_from_multimodal += n,
        }
    }

    pub fn merge(&mut self, other: &ChannelAudit) {
        self.downlink_messages += other.downlink_messages;
        self.uplink_messages += other.uplink_messages;
        self.visual_to_audio_only += other.visual_to_audio_only;
        self.audio_model_from_audio_only += other.audio_model_from_audio_only;
        self.audio_model_from_multimodal += other.audio_model_from_multimodal;
    }
}
