use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spkeval::audio::write_wav;
use spkeval::io::EmbeddingStore;
use spkeval::synth::{synth_utterance, VoiceProfile};

fn spkeval(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spkeval")).args(args).current_dir(dir).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spkeval(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&spkeval(&["score", "--store", "x"], dir.path())), 2);
    assert_eq!(code(&spkeval(&["embed", "-o", "out.bin"], dir.path())), 2);
    assert_eq!(code(&spkeval(&["--help"], dir.path())), 0);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spkeval(&["cohort", "--train", "missing.bin", "-o", "c.bin"], dir.path())), 3);
    std::fs::write(dir.path().join("junk.bin"), b"not a store").unwrap();
    assert_eq!(code(&spkeval(&["cohort", "--train", "junk.bin", "-o", "c.bin"], dir.path())), 3);
    std::fs::write(dir.path().join("bad.txt"), "a b\nc\n").unwrap();
    let out = spkeval(&["evaluate", "--scores", "bad.txt", "--trials", "bad.txt"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = EmbeddingStore::new(2);
    store.insert("u1", "a", vec![1.0, 0.0]).unwrap();
    store.save(dir.path().join("s.bin")).unwrap();
    std::fs::write(dir.path().join("t.txt"), "u1 u1 target\n").unwrap();
    let out = spkeval(&["score", "--trials", "t.txt", "--store", "s.bin", "--set", "colour=red", "-o", "o.txt"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn fbank_embed_and_score_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut args = vec!["embed".to_string(), "-o".into(), "store.bin".into()];
    for s in ["a", "b"] {
        std::fs::create_dir_all(dir.path().join(s)).unwrap();
        let voice = VoiceProfile::random(s, &mut rng);
        for u in 0..2 {
            let rel = format!("{s}/{s}{u}.wav");
            write_wav(dir.path().join(&rel), &synth_utterance(&voice, &format!("{s}{u}"), 0.5, 16000, &mut rng)).unwrap();
            args.push(rel);
        }
    }
    let out = spkeval(&["fbank", "a/a0.wav", "-o", "a0.fbank"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(code(&spkeval(&args, dir.path())), 0);
    let store = EmbeddingStore::load(dir.path().join("store.bin")).unwrap();
    assert_eq!((store.len(), store.dim()), (4, 256));
    assert_eq!(store.get("b1").unwrap().speaker_id, "b");

    std::fs::write(dir.path().join("enroll.txt"), "a a0\nb b0\n").unwrap();
    std::fs::write(dir.path().join("trials.txt"), "a a1 target\na b1 nontarget\nb b1 target\nb a1 nontarget\n").unwrap();
    let out = spkeval(
        &["score", "--trials", "trials.txt", "--enrollment", "enroll.txt", "--store", "store.bin", "--set", "asnorm=off", "-o", "scores.txt"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("scores.txt")).unwrap().lines().count(), 4);

    // AS-norm without a cohort is a usage error; a trial naming an unknown utterance is a data error.
    let out = spkeval(&["score", "--trials", "trials.txt", "--enrollment", "enroll.txt", "--store", "store.bin", "-o", "x.txt"], dir.path());
    assert_eq!(code(&out), 2);
    std::fs::write(dir.path().join("bad_trials.txt"), "a zz target\n").unwrap();
    let out = spkeval(
        &["score", "--trials", "bad_trials.txt", "--enrollment", "enroll.txt", "--store", "store.bin", "--set", "asnorm=off", "-o", "x.txt"],
        dir.path(),
    );
    assert_eq!(code(&out), 3);
}
