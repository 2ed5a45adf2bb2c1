//! Trains both hashes on a small synthetic problem and prints retrieval
//! metrics next to the unimodal Euclidean baseline.
//!
//! cargo run --release -p diffhash --example desk_scale -- [center_std] [rates]

use std::time::Instant;

use diffhash::eval::{evaluate_cross_modal, evaluate_euclidean, Direction};
use diffhash::mmkdif::select_bases;
use diffhash::{
    generate_synthetic, sample_pairs, train_cmdif, train_mmkdif, HashModel, HashParams, Modality, RateEstimator,
    SynthConfig,
};

fn main() -> diffhash::Result<()> {
    let mut args = std::env::args().skip(1);
    let center_std: f64 = args.next().map_or(10.0, |s| s.parse().expect("center_std"));
    let rates: RateEstimator = args.next().map_or(Ok(RateEstimator::Joint), |s| s.parse())?;

    let config = SynthConfig {
        points_per_class_x: 240,
        points_per_class_y: 240,
        center_std,
        seed: 1,
        ..SynthConfig::default()
    };
    let full = generate_synthetic(&config)?;
    let (train, test) = full.split_per_class(200, 200)?;
    let pairs = sample_pairs(&train, 1_000, 10_000, 2)?;
    let mut params = HashParams::new(25);
    params.rates = rates;

    let t = Instant::now();
    let linear: HashModel = train_cmdif(&train, &pairs, &params)?.into();
    println!("cmdif trained in {:.2?}", t.elapsed());
    let bases = select_bases(&train, 200, 200, 3)?;
    let t = Instant::now();
    let kernel: HashModel = train_mmkdif(&train, &pairs, &bases, &params)?.into();
    println!("mmkdif trained in {:.2?}", t.elapsed());

    for model in [&linear, &kernel] {
        for dir in [Direction::XToY, Direction::YToX] {
            let r = evaluate_cross_modal(model, &test, dir)?;
            println!("{} {dir}: mAP {:.4} EER {:.4}", model.method_name(), r.map, r.eer);
        }
    }
    for modality in [Modality::X, Modality::Y] {
        let r = evaluate_euclidean(&test, modality)?;
        println!("euclidean {modality:?}: mAP {:.4} EER {:.4}", r.map, r.eer);
    }
    Ok(())
}
