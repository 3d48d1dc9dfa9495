//! The MANET technology check-list, with one user-supplied row.
//!
//! cargo run --example taxonomy

use manetlab::harness::{Support, TaxonomyReport, TechnologyProfile};

fn main() {
    let batman = TechnologyProfile::new(
        "B.A.T.M.A.N. adv",
        [Support::Yes, Support::Yes, Support::Yes, Support::No, Support::Partial],
    );
    let report = TaxonomyReport::with_rows([batman]);
    print!("{}", report.to_table());
    println!();
    print!("{}", report.to_csv());
}
