//! Deep Q-learning braking agent.

mod eval;
mod learner;
mod qnet;
mod replay;
mod train;

pub use eval::{
    evaluate_paired, run_greedy_episode, Arm, EpisodeSummary, EvalReport, EvalSummary, EPISODES_HEADER, SUMMARY_HEADER,
};
pub use learner::{argmax, bellman_target, guided_action, AgentConfig, DqnAgent};
pub use qnet::{dueling_combine, QNetShape, QNetwork, QTrace, Variant};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    agent_config_text, derive_seed, load_checkpoint, moving_average, parse_agent_config_text, save_checkpoint, train,
    EpisodeStats, SeedDomain, TrainingReport, AGENT_FILE, POLICY_FILE, TARGET_FILE, TRAINING_REPORT_HEADER,
};
