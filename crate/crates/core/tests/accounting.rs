//! Record accounting of the converters on synthetic log tables with the
//! public datasets' log counts.

use std::fmt::Write as _;

use ifm::data::convert::{convert_table, ConvertOptions, TableFormat};
use ifm::data::{split_sizes, DEFAULT_RATIOS};
use ifm::numeric::SeededRng;

fn frappe_table(logs: usize) -> String {
    let mut rng = SeededRng::new(1, "frappe-table");
    let mut s = String::from("user\titem\tcnt\tdaytime\tweekday\tisweekend\thomework\tcost\tweather\tcountry\tcity\n");
    for _ in 0..logs {
        let item = rng.below(4082);
        writeln!(
            s,
            "{}\t{item}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            rng.below(957),
            1 + rng.below(50),
            rng.below(7),
            rng.below(7),
            rng.below(2),
            rng.below(3),
            item % 2,
            rng.below(9),
            rng.below(80),
            rng.below(233)
        )
        .unwrap();
    }
    s
}

fn movielens_table(logs: usize) -> String {
    let mut rng = SeededRng::new(2, "movielens-table");
    let mut s = String::from("userId,movieId,tag,timestamp\n");
    for _ in 0..logs {
        writeln!(s, "{},{},tag{},0", rng.below(17_045), rng.below(23_743), rng.below(49_657)).unwrap();
    }
    s
}

#[test]
fn frappe_shaped_logs_triple() {
    let out =
        convert_table(frappe_table(96_203).as_bytes(), &TableFormat::frappe(), &ConvertOptions::default()).unwrap();
    assert_eq!(out.stats.logs, 96_203);
    assert_eq!(out.stats.skipped, 0);
    assert_eq!(out.instances.len(), 288_609);
    assert_eq!(out.schema.n_fields(), 10);
    assert_eq!(out.instances.iter().filter(|x| x.target() > 0.0).count(), 96_203);
    assert!(out.instances.iter().all(|x| x.pair_count() == 45));
    assert_eq!(split_sizes(out.instances.len(), DEFAULT_RATIOS).unwrap(), (202_028, 57_721, 28_860));
}

#[test]
fn movielens_shaped_logs_triple() {
    let out = convert_table(movielens_table(668_953).as_bytes(), &TableFormat::movielens(), &ConvertOptions::default())
        .unwrap();
    assert_eq!(out.stats.skipped, 0);
    assert_eq!(out.instances.len(), 2_006_859);
    assert_eq!(out.schema.n_fields(), 3);
}
