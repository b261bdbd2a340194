use spkeval::audio::FeatureMatrix;
use spkeval::checkpoint::Checkpoint;
use spkeval::net::{NetSpec, Network};

fn main() -> spkeval::Result<()> {
    let frames = 64;
    let feats = FeatureMatrix::new((0..frames * 80).map(|i| (i as f64 * 0.37).sin()).collect(), frames, 80, 0.01);
    for code in [34, 152, 221, 293] {
        let net = Network::build(NetSpec::from_code(code)?, 0)?;
        let pc = net.param_count();
        let (emb, trace) = net.forward_traced(&feats)?;
        println!(
            "ResNet{code}: {:.2}M params ({:.2}M without the embedding layer)",
            pc.total() as f64 / 1e6,
            pc.backbone as f64 / 1e6
        );
        println!("  stem {:?} stages {:?} pooled {} embedding {}", trace.stem, trace.stages, trace.pooled_len, emb.len());
    }

    let net = Network::build(NetSpec::resnet34(), 5)?;
    let mut bytes = Vec::new();
    net.to_checkpoint().write(&mut bytes)?;
    let back = Network::from_checkpoint(&Checkpoint::read(bytes.as_slice())?)?;
    let same = net.forward(&feats)? == back.forward(&feats)?;
    println!("checkpoint of {} bytes reloads to identical embeddings: {same}", bytes.len());
    Ok(())
}
