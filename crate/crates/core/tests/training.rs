use dcmrta::rl::{train, Checkpoint, SimEnv, TrainConfig};
use dcmrta::sim::{NavMode, SimConfig};
use dcmrta::world::LayoutPreset;
use std::sync::Arc;

fn desk() -> SimEnv {
    let mut c = SimConfig::new(Arc::new(LayoutPreset::Small.generate(20, 20, 1).unwrap()));
    c.n_robots = 4;
    c.nav_mode = NavMode::Astar;
    SimEnv::new(vec![c], 50)
}

fn config() -> TrainConfig {
    TrainConfig {
        updates: 60,
        embed_dim: 16,
        gamma: 0.9,
        learning_rate: 3e-3,
        eval_every: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn desk_training_raises_mean_return() {
    let out = train(&config(), &desk()).unwrap();
    let mean = |rows: &[dcmrta::rl::TrainLogRow]| rows.iter().map(|r| r.mean_return).sum::<f64>() / rows.len() as f64;
    let first = mean(&out.log[..10]);
    let last = mean(&out.log[out.log.len() - 10..]);
    assert!(last > first, "mean return went from {first} to {last}");
}

#[test]
fn checkpoint_reproduces_the_trained_policy() {
    let cfg = TrainConfig { updates: 3, ..config() };
    let out = train(&cfg, &desk()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    Checkpoint::new(out.final_policy.clone(), &cfg).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.policy, out.final_policy);
    assert_eq!(back.train_config, Some(cfg));
}
