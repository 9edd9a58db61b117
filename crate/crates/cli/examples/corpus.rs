//! Writes the 20-file synthetic bench corpus: `cargo run --example corpus -- <dir>`.
fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "corpus".into());
    let files = petra_core::fixtures::write_corpus(std::path::Path::new(&dir), 20, 2025).expect("write corpus");
    println!("wrote {} files to {dir}", files.len());
}
