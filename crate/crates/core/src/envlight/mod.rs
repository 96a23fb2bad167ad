//! Environment maps, the LED rig, environment → rig quantization, OLAT bases,
//! the interleaved capture schedule and environment tokens.

mod envmap;
mod rig;
mod schedule;
mod tokens;

pub use envmap::{EnvironmentMap, DEFAULT_ENV_COLS, DEFAULT_ENV_ROWS};
pub use rig::{
    fibonacci_directions, olat_basis, quantize_to_rig, LedRig, RigLighting, RigQuantizer, DEFAULT_LED_COUNT,
};
pub use schedule::{make_schedule, CaptureSchedule, FrameTag};
pub use tokens::{env_tokens, positional_encoding, EnvToken, EnvTokens, PE_DIMS, TOKEN_DIMS};
