//! File formats and synthetic scenes.

pub mod cam;
pub mod pair;
pub mod pfm;
pub mod ply;
pub mod pnm;
pub mod scene;
pub mod synth;

pub use scene::{read_scene, write_scene, SceneBundle};
pub use synth::{synth_scene, Geometry, SynthSceneSpec, Texture};
