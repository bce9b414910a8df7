//! Checks the standing assumptions on the benchmark plant and on a plant with a Jordan block.

use ofspc::{Mat, SystemSpec};

fn print_report(label: &str, spec: &SystemSpec) -> ofspc::Result<()> {
    let report = spec.validate()?;
    println!("{label}:");
    for c in &report.checks {
        println!(
            "  {:<5} {:<36} margin {:+.2e}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.margin
        );
    }
    Ok(())
}

fn main() -> ofspc::Result<()> {
    let spec = SystemSpec::benchmark(1.0);
    print_report("benchmark", &spec)?;

    let mut jordan = spec.clone();
    jordan.a = Mat::from_row_slice(
        4,
        4,
        &[
            0.9, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.5,
        ],
    );
    print_report("Jordan block at 1", &jordan)?;
    match jordan.ensure_valid() {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }
    Ok(())
}
