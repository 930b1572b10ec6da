mod common;

use algd_core::{EnvKind, Guidance};
use algd_lab::RunConfig;

#[test]
fn empty_document_gives_published_defaults() {
    let c = RunConfig::from_toml_str("").unwrap();
    let t = &c.train;
    assert_eq!(t.gamma, 0.99);
    assert_eq!(t.lr, 3e-4);
    assert_eq!(t.batch_size, 256);
    assert_eq!(t.polyak, 0.005);
    assert_eq!(t.diffusion_steps, 5);
    assert_eq!(t.mc_samples, 6);
    assert_eq!(t.ensemble_size, 6);
    assert_eq!(t.rho, 1.0);
    assert_eq!(t.buffer_capacity, 1_000_000);
    assert_eq!(t.eval_every, 20);
    assert_eq!(t.eval_episodes, 10);
    assert_eq!(t.guidance, Guidance::Augmented);
    assert_eq!(c.env.kind, EnvKind::PointHazard);
    assert_eq!(c.checkpoint_every, 50);
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let e = RunConfig::from_toml_str("[train]\nbogus = 1\n").unwrap_err().to_string();
    assert!(e.contains("train") && e.contains("bogus"), "{e}");
    let e = RunConfig::from_toml_str("colour = 1\n").unwrap_err().to_string();
    assert!(e.contains("colour"), "{e}");
    let e = RunConfig::from_toml_str("[env.goal]\nx = 1\nz = 2\n").unwrap_err().to_string();
    assert!(e.contains("env.goal") && e.contains('z'), "{e}");
}

#[test]
fn type_errors_name_the_key() {
    let e = RunConfig::from_toml_str("[train]\nbatch_size = \"big\"\n").unwrap_err().to_string();
    assert!(e.contains("train.batch_size"), "{e}");
}

#[test]
fn range_errors_name_the_key() {
    let e = RunConfig::from_toml_str("[train]\ngamma = 1.5\n").unwrap_err().to_string();
    assert!(e.contains("train.gamma"), "{e}");
    let e = RunConfig::from_toml_str("[env]\nhorizon = 0\n").unwrap_err().to_string();
    assert!(e.contains("env.horizon"), "{e}");
    let e = RunConfig::from_toml_str("checkpoint_every = 0\n").unwrap_err().to_string();
    assert!(e.contains("checkpoint_every"), "{e}");
}

#[test]
fn unknown_environment_and_variant() {
    assert!(RunConfig::from_toml_str("[env]\nname = \"maze\"\n").is_err());
    let c = RunConfig::from_toml_str("[train]\nguidance = \"standard\"\n[env]\nname = \"diff_drive\"\n").unwrap();
    assert_eq!(c.train.guidance, Guidance::Standard);
    assert_eq!(c.env.kind, EnvKind::DiffDrive);
    assert!(RunConfig::from_toml_str("[train]\nguidance = \"penalty\"\n").is_err());
}

#[test]
fn serialize_parse_round_trip() {
    for c in [RunConfig::default(), common::tiny(7), algd_lab::cli::bundled_point_hazard()] {
        let text = c.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
