//! Writes the generated toy corpus in column format.
//!
//! cargo run --example make_toy -- data/toy.tsv [sentences] [seed]

use std::fs::File;
use std::io::BufWriter;

use negscope::corpus::write_instances;
use negscope::synthetic::generate;

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or("data/toy.tsv", String::as_str);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let instances = generate(n, 0.4, seed);
    write_instances(BufWriter::new(File::create(path)?), &instances)?;
    eprintln!("wrote {} instances to {path}", instances.len());
    Ok(())
}
