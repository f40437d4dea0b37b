//! Round orchestration: analog superposition at the receiver, the per-round
//! state machine, whole experiments, and replayable round traces.

pub mod experiment;
pub mod round;
pub mod trace;

pub use experiment::{Engine, GlobalState, RunOutput, RunSummary};
pub use round::{superimpose, SuperimposeResult};
pub use trace::{replay_trace, FullState, ReplayReport, RoundTrace, UserRoundRecord};
