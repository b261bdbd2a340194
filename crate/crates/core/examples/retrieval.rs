use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spkeval::io::EmbeddingStore;
use spkeval::metrics::mean_average_precision;
use spkeval::pipeline::{relevant_ids, retrieve_topk};
use spkeval::scoring::{build_cohort, AsNorm, CohortSelection};

fn noisy(center: &[f32], rng: &mut ChaCha8Rng) -> Vec<f32> {
    center.iter().map(|c| c + rng.random_range(-0.6..0.6)).collect()
}

fn main() -> spkeval::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 32;
    let centers: Vec<Vec<f32>> = (0..40).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let mut pool = EmbeddingStore::new(dim);
    let mut queries = EmbeddingStore::new(dim);
    let mut cohort_src = EmbeddingStore::new(dim);
    for (s, c) in centers.iter().enumerate() {
        let spk = format!("spk{s:02}");
        if s >= 30 {
            for u in 0..3 {
                cohort_src.insert(format!("{spk}-c{u}"), &spk, noisy(c, &mut rng))?;
            }
            continue;
        }
        queries.insert(format!("{spk}-q"), &spk, noisy(c, &mut rng))?;
        for u in 0..6 {
            pool.insert(format!("{spk}-{u}"), &spk, noisy(c, &mut rng))?;
        }
    }

    let q: Vec<&[f32]> = queries.iter().map(|r| r.vector.as_slice()).collect();
    let relevant: Vec<HashSet<String>> = queries.iter().map(|r| relevant_ids(&pool, &r.speaker_id)).collect();
    let cohort = build_cohort(&cohort_src)?;
    let norm = AsNorm::new(&cohort, CohortSelection::TopK(5))?;
    for (name, n) in [("cosine", None), ("cosine+asnorm", Some(&norm))] {
        let r = retrieve_topk(&q, &pool, 10, n)?;
        let rankings: Vec<Vec<&str>> =
            r.lists.iter().map(|l| l.iter().map(|h| h.utterance_id.as_str()).collect()).collect();
        println!("{name:<14} mAP@10 {:.4}", mean_average_precision(&rankings, &relevant)?);
    }
    Ok(())
}
