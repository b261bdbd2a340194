use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spkeval::synth::ClusterModel;
use spkeval::train::{accuracy, format_trace, lr_at, train_two_stage, SgdConfig, StagePlan};

fn main() -> spkeval::Result<()> {
    let base = 16;
    // Classes base..3*base stand in for the speed-perturbed copies.
    let model = ClusterModel::new(3 * base, 256, 4.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let train = model.sample(40, &mut rng);
    let test: Vec<_> = model.sample(20, &mut rng).into_iter().filter(|e| e.label < base).collect();

    let one = StagePlan::stage_one().with_epochs(30);
    let two = StagePlan::stage_two().with_epochs(5);
    println!("stage I lr {:.2e} .. {:.2e}", lr_at(0.0, &one), lr_at(one.epochs as f64, &one));
    let sgd = SgdConfig { batch_size: 32, ..SgdConfig::default() };
    let out = train_two_stage(&train, base, (&one, &two), sgd, 0)?;

    print!("stage I ({} classes)\n{}", out.stage_one_classes, format_trace(&out.stage_one.trace));
    print!("stage II ({} classes)\n{}", out.stage_two_classes, format_trace(&out.stage_two.trace));
    println!("held-out accuracy {:.3}", accuracy(&out.stage_two.head, &test));
    Ok(())
}
