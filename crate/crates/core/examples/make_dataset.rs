//! Writes a generated vector dataset in the on-disk layout the CLI reads.
//!
//! `cargo run --example make_dataset -- OUT_DIR [samples] [seed]`

use conceptdet::pipeline::write_dataset;
use conceptdet::synthetic::{separable_dataset, SyntheticSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(out) = args.next() else {
        eprintln!("usage: make_dataset OUT_DIR [samples] [seed]");
        std::process::exit(2);
    };
    let samples = args.next().map_or(500, |s| s.parse().expect("samples"));
    let seed = args.next().map_or(0, |s| s.parse().expect("seed"));
    let spec = SyntheticSpec {
        samples,
        ..SyntheticSpec::default()
    };
    let d = separable_dataset(&spec, seed).expect("valid spec");
    write_dataset(&out, &d).expect("write dataset");
    println!(
        "{} samples, {} concepts -> {out}",
        d.len(),
        d.vocabulary().len()
    );
}
