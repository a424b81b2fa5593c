//! Wall-clock cost of training steps for a few network and batch sizes.
//!
//! The first main step includes the loss-weight calibration pass.

use std::time::Instant;

use turbopinn::data::{make_mms_case, MmsFamily, MmsOptions};
use turbopinn::network::{FieldNetworkSet, NetworkConfig};
use turbopinn::trainer::{input_bounds, BatchSizes, TrainConfig, Trainer};

fn main() {
    let (_, case) = make_mms_case(MmsFamily::TrigVortex, 4200.0, &MmsOptions::default()).unwrap();
    let cases = [case];
    for (width, depth, n_freq, batch) in [
        (64, 4, 10, 512),
        (32, 3, 6, 256),
        (32, 3, 6, 128),
        (24, 3, 4, 128),
        (20, 2, 4, 128),
    ] {
        let cfg = NetworkConfig {
            hidden: vec![width; depth],
            n_freq,
            bounds: input_bounds(&cases),
            ..Default::default()
        };
        let net = FieldNetworkSet::init(cfg, 0).unwrap();
        let train = TrainConfig {
            pretrain_steps: 20,
            main_steps: 20,
            batch: BatchSizes {
                data: batch,
                collocation: batch,
                boundary: batch / 2,
            },
            convergence: None,
            ..Default::default()
        };
        let mut t = Trainer::new(net, &cases, train).unwrap();
        let start = Instant::now();
        for _ in 0..20 {
            t.step().unwrap();
        }
        let pre = start.elapsed().as_secs_f64() / 20.0;
        let start = Instant::now();
        t.step().unwrap();
        let entry = start.elapsed().as_secs_f64();
        let start = Instant::now();
        for _ in 0..19 {
            t.step().unwrap();
        }
        let main = start.elapsed().as_secs_f64() / 19.0;
        println!(
            "{width}x{depth} f{n_freq} b{batch}: pretrain {:.1} ms, entry {:.1} ms, main {:.1} ms",
            pre * 1e3,
            entry * 1e3,
            main * 1e3
        );
    }
}
