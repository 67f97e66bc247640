//! Run the numeric self-verification suite and print the report.
//!
//! Each line is one property checked against an independent route: the
//! brute-force loss oracle, central finite differences, frozen closed-form
//! constants, or a structural invariant that must hold exactly. The process
//! exits nonzero if any check fails, so this doubles as a CI gate.

use cddg::verify::run_verification;

fn main() -> cddg::Result<()> {
    let report = run_verification()?;
    print!("{}", report.render());
    if !report.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
