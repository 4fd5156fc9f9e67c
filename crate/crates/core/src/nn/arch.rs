//! Layer stacks for the three cascade stages.
//!
//! | stage | layers                                  | window | stride |
//! |-------|-----------------------------------------|--------|--------|
//! | 1     | conv3(16) pool relu conv5(16) pool relu head5 | 30 | 4 |
//! | 2     | 4 conv + head3                          | 34     | 4      |
//! | 3     | 5 conv + head3                          | 42     | 4      |

use super::layer::{LayerSpec, NetworkSpec};

/// Proposal network: two convolutions, each followed by max pooling and ReLU,
/// then a fully convolutional head.
pub fn stage1() -> NetworkSpec {
    NetworkSpec::new(
        "stage1",
        vec![
            LayerSpec::conv(3, 16, 3, 1, 0),
            LayerSpec::max_pool(16, 2, 2),
            LayerSpec::relu(16),
            LayerSpec::conv(16, 16, 5, 1, 0),
            LayerSpec::max_pool(16, 2, 2),
            LayerSpec::relu(16),
            LayerSpec::head(16, 5),
        ],
    )
    .expect("stage 1 architecture")
}

pub fn stage2() -> NetworkSpec {
    NetworkSpec::new(
        "stage2",
        vec![
            LayerSpec::conv(3, 8, 3, 1, 0),
            LayerSpec::relu(8),
            LayerSpec::max_pool(8, 2, 2),
            LayerSpec::conv(8, 16, 3, 1, 0),
            LayerSpec::relu(16),
            LayerSpec::max_pool(16, 2, 2),
            LayerSpec::conv(16, 24, 3, 1, 0),
            LayerSpec::relu(24),
            LayerSpec::conv(24, 24, 3, 1, 0),
            LayerSpec::relu(24),
            LayerSpec::head(24, 3),
        ],
    )
    .expect("stage 2 architecture")
}

pub fn stage3() -> NetworkSpec {
    NetworkSpec::new(
        "stage3",
        vec![
            LayerSpec::conv(3, 16, 3, 1, 0),
            LayerSpec::relu(16),
            LayerSpec::max_pool(16, 2, 2),
            LayerSpec::conv(16, 16, 3, 1, 0),
            LayerSpec::relu(16),
            LayerSpec::max_pool(16, 2, 2),
            LayerSpec::conv(16, 24, 3, 1, 0),
            LayerSpec::relu(24),
            LayerSpec::conv(24, 24, 3, 1, 0),
            LayerSpec::relu(24),
            LayerSpec::conv(24, 32, 3, 1, 0),
            LayerSpec::relu(32),
            LayerSpec::head(32, 3),
        ],
    )
    .expect("stage 3 architecture")
}

/// Architecture for a 1-based stage number.
pub fn for_stage(stage: usize) -> Option<NetworkSpec> {
    match stage {
        1 => Some(stage1()),
        2 => Some(stage2()),
        3 => Some(stage3()),
        _ => None,
    }
}
