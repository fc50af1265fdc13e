//! Writes the 12-agent benchmark as a scenario file.
//!
//! `cargo run --example write_paper_config -- configs/paper.json`

use tvswarm::config::paper_config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "paper.json".into());
    let seed = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::write(&path, paper_config(seed).to_json() + "\n")?;
    println!("wrote {path}");
    Ok(())
}
