//! Invertible ISP: a normalizing-flow style stack of invertible channel
//! mixes and affine coupling blocks mapping raw to RGB and back, plus the
//! white-balance and gamma operations used to build pipeline variants.

mod checkpoint;
mod color;
mod conv;
mod coupling;
mod loss;
mod mix;
mod model;
mod squeeze;
mod subnet;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, load_checkpoint, save_checkpoint};
pub use color::{
    gamma_decode, gamma_decode_image, gamma_encode, gamma_encode_image, inverse_white_balance,
    synth_isp_oracle, white_balance, ORACLE_COLOR_MATRIX, ORACLE_GAMMA, ORACLE_WB_GAINS,
};
pub use coupling::CouplingBlock;
pub use loss::{loss, loss_and_grad, LossAndGrad, Pair};
pub use mix::{invert, MixMatrix, MIN_ABS_DET};
pub use model::{rgb_to_tensor, tensor_to_rgb, InvIspModel, ModelConfig, ParamGroup, Provenance};
pub use squeeze::{squeeze, unsqueeze};
pub use subnet::SubNet;
pub use train::{train, Adam, LogRow, TrainConfig, TrainOutcome, Trainer};
