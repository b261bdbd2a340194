use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spkeval::audio::{add_noise, augment_online, reverberate, speed_perturb, AugmentConfig, Frontend};
use spkeval::synth::{synth_noise, synth_rir, synth_utterance, VoiceProfile};

fn main() -> spkeval::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let voice = VoiceProfile::random("alice", &mut rng);
    let clean = synth_utterance(&voice, "alice-000", 2.0, 16000, &mut rng);
    let noise = synth_noise(2.0, 16000, &mut rng);
    let rir = synth_rir(2000, 0.05, &mut rng);

    let frontend = Frontend::default();
    let variants = [
        ("clean", clean.clone()),
        ("noise 10 dB", add_noise(&clean, &noise, 10.0)?),
        ("reverb", reverberate(&clean, &rir)?),
        ("speed 0.9", speed_perturb(&clean, 0.9)?),
        ("speed 1.1", speed_perturb(&clean, 1.1)?),
    ];
    for (name, audio) in &variants {
        let feats = frontend.extract(audio)?;
        let means = feats.column_means();
        let max_mean = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("{name:<12} {:>5} samples -> {:>3} frames x {} mels, |CMN mean| <= {max_mean:.1e}", audio.len(), feats.frames, feats.dims);
    }

    let cfg = AugmentConfig::default();
    for _ in 0..4 {
        let a = augment_online(&clean, &cfg, std::slice::from_ref(&noise), std::slice::from_ref(&rir), &mut rng)?;
        println!("online: noise {} reverb {} speed {}", a.noise_applied, a.reverb_applied, a.speed_ratio);
    }
    Ok(())
}
