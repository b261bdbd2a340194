use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use spkeval::metrics::{DcfParams, EvalReport};
use spkeval::scoring::{fuse_scores, fusion_weights, ScoreSet};

fn main() -> spkeval::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let labels: Vec<bool> = (0..4000).map(|i| i % 20 == 0).collect();
    let params = DcfParams::default();

    let mut sets = Vec::new();
    let mut dcfs = Vec::new();
    for (name, gap, spread) in [("sys-a", 2.0, 1.0), ("sys-b", 1.6, 0.5), ("sys-c", 1.2, 3.0)] {
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let scores: Vec<f64> =
            labels.iter().map(|&t| spread * (noise.sample(&mut rng) + if t { gap } else { 0.0 })).collect();
        let r = EvalReport::compute(&scores, &labels, &params)?;
        println!("{name}: minDCF {:.4} EER {:.2}%", r.min_dcf, r.eer);
        dcfs.push(r.min_dcf);
        sets.push(ScoreSet::new(scores, name, "cosine"));
    }
    println!("weights {:?}", fusion_weights(&dcfs)?);
    let fused = fuse_scores(&sets, &dcfs)?;
    let r = EvalReport::compute(&fused.scores, &labels, &params)?;
    println!("fused: minDCF {:.4} EER {:.2}% at FNR {:.2}% FPR {:.3}%", r.min_dcf, r.eer, r.fnr, r.fpr);
    Ok(())
}
