#![allow(dead_code)]

use algd_lab::RunConfig;

/// A small configuration that trains in well under a second.
pub fn tiny(seed: u64) -> RunConfig {
    let text = format!(
        r#"
checkpoint_every = 3

[train]
seed = {seed}
total_env_steps = 700
epoch_length = 100
train_repeat = 5
warmup_steps = 200
batch_size = 16
lr = 1e-3
polyak = 0.05
target_update_every = 1
sigma_max = 0.5
beta = 0.05
critic_hidden = [8, 8]
cost_hidden = [8, 8]
score_hidden = [8, 8]
ensemble_size = 3
eval_every = 2
eval_episodes = 2

[env]
name = "point_hazard"
horizon = 50
h = 0.5
"#
    );
    RunConfig::from_toml_str(&text).unwrap()
}
