mod common;

use algd_lab::{checkpoint, run};

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(3);
    let r = run::train(&cfg, None).unwrap();
    assert!(r.trainer.agent.grad_steps > 0);
    let path = dir.path().join("a.json");
    let progress = checkpoint::Progress { epoch: r.trainer.epoch(), env_steps: r.trainer.env_steps() };
    checkpoint::save(&path, &r.trainer.agent, &cfg, progress).unwrap();

    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.config, cfg);
    assert_eq!(back.progress, progress);
    assert_eq!(back.agent.dual, r.trainer.agent.dual);
    assert_eq!(back.agent.grad_steps, r.trainer.agent.grad_steps);
    assert_eq!(back.agent.opt_score.t, r.trainer.agent.opt_score.t);
    let a = r.trainer.agent.named_tensors();
    let b = back.agent.named_tensors();
    assert_eq!(a.len(), b.len());
    for ((na, sa, xa), (nb, sb, xb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(sa, sb);
        let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(xa), bits(xb), "{na}");
    }

    let path2 = dir.path().join("b.json");
    checkpoint::save(&path2, &back.agent, &cfg, progress).unwrap();
    assert_eq!(std::fs::read(path.with_extension("bin")).unwrap(), std::fs::read(path2.with_extension("bin")).unwrap());
}

#[test]
fn manifest_offsets_cover_the_blob() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(0);
    let r = run::train(&cfg, None).unwrap();
    let path = dir.path().join("c.json");
    checkpoint::save(&path, &r.trainer.agent, &cfg, Default::default()).unwrap();
    let m: checkpoint::Manifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut expected = 0u64;
    for t in &m.tensors {
        assert_eq!(t.offset, expected, "{}", t.name);
        expected += 4 * t.shape.iter().product::<usize>() as u64;
    }
    assert_eq!(expected, std::fs::metadata(path.with_extension("bin")).unwrap().len());
    assert_eq!(m.tensors[0].name, "score.embedding");
}

#[test]
fn missing_or_truncated_checkpoints_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(checkpoint::load(&dir.path().join("none.json")).is_err());

    let cfg = common::tiny(0);
    let r = run::train(&cfg, None).unwrap();
    let path = dir.path().join("d.json");
    checkpoint::save(&path, &r.trainer.agent, &cfg, Default::default()).unwrap();
    let bin = path.with_extension("bin");
    let bytes = std::fs::read(&bin).unwrap();
    std::fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
    assert!(checkpoint::load(&path).is_err());
}
