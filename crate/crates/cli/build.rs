// The acceptance target includes the core and service check files, which
// drop their `#[test]` attributes under this cfg.
fn main() {
    println!("cargo::rustc-check-cfg=cfg(acceptance_runner)");
    println!("cargo::rustc-cfg=acceptance_runner");
}
