use crate::attention::{AttentionConfig, TokenAxis};

/// Where the spatial scale factor is bridged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleStage {
    /// Bicubic-upsample the LR cube first; the body runs at full resolution.
    Input,
    /// The body runs at LR resolution; reconstruction ends in a pixel shuffle.
    Output,
}

impl UpsampleStage {
    pub fn name(self) -> &'static str {
        match self {
            UpsampleStage::Input => "input",
            UpsampleStage::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "input" => Some(UpsampleStage::Input),
            "output" => Some(UpsampleStage::Output),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub bands: usize,
    pub channels: usize,
    pub blocks: usize,
    pub heads: usize,
    pub window: usize,
    pub scale: usize,
    pub use_pci: bool,
    pub use_ptsa: bool,
    pub use_mvfn: bool,
    pub upsample_stage: UpsampleStage,
    pub token_axis: TokenAxis,
    /// MVFN expansion ratio.
    pub gamma: usize,
    pub tau_init: f64,
    pub kmeans_max_iters: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            bands: 102,
            channels: 180,
            blocks: 4,
            heads: 6,
            window: 8,
            scale: 4,
            use_pci: true,
            use_ptsa: true,
            use_mvfn: true,
            upsample_stage: UpsampleStage::Input,
            token_axis: TokenAxis::Channel,
            gamma: 2,
            tau_init: 1.0,
            kmeans_max_iters: 10,
        }
    }
}

impl ModelConfig {
    /// The small configuration used by tests and gradient checks.
    pub fn tiny(bands: usize, scale: usize) -> Self {
        Self {
            bands,
            channels: 16,
            blocks: 1,
            heads: 2,
            window: 4,
            scale,
            ..Self::default()
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            heads: self.heads,
            window: self.window,
            tau_init: self.tau_init,
            token_axis: self.token_axis,
            kmeans_max_iters: self.kmeans_max_iters,
        }
    }

    /// Channels produced by the shallow convolution before the pan image
    /// is appended.
    pub fn shallow_out(&self) -> usize {
        if self.use_pci {
            self.channels - self.pan_channels()
        } else {
            self.channels
        }
    }

    /// Channels the pan image occupies in the feature map.
    pub fn pan_channels(&self) -> usize {
        match (self.use_pci, self.upsample_stage) {
            (false, _) => 0,
            (true, UpsampleStage::Input) => 1,
            (true, UpsampleStage::Output) => self.scale * self.scale,
        }
    }

    /// Output channels of the reconstruction convolution.
    pub fn recon_out(&self) -> usize {
        match self.upsample_stage {
            UpsampleStage::Input => self.bands,
            UpsampleStage::Output => self.bands * self.scale * self.scale,
        }
    }

    /// Lists every violated invariant.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.bands < 1 {
            p.push("bands must be at least 1".to_string());
        }
        if self.blocks < 1 {
            p.push("blocks must be at least 1".to_string());
        }
        if ![2, 4, 8].contains(&self.scale) {
            p.push(format!("scale must be 2, 4 or 8, got {}", self.scale));
        }
        if self.heads < 1 || !self.channels.is_multiple_of(self.heads) {
            p.push(format!(
                "channels ({}) must be divisible by heads ({})",
                self.channels, self.heads
            ));
        }
        if self.window < 2 {
            p.push(format!("window must be at least 2, got {}", self.window));
        }
        if self.gamma < 1 {
            p.push("gamma must be at least 1".to_string());
        }
        if self.kmeans_max_iters < 1 {
            p.push("kmeans_max_iters must be at least 1".to_string());
        }
        if self.use_pci && self.channels <= self.pan_channels() {
            p.push(format!(
                "channels ({}) must exceed the {} pan channel(s)",
                self.channels,
                self.pan_channels()
            ));
        }
        p
    }
}
