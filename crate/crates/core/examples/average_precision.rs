//! Ranking quality of anomaly scores, per anomaly class.

use fedledger::data::AnomalyLabel;
use fedledger::eval::{ap_per_class, average_precision, ScoredRow};

fn main() {
    // perfect ranking, one miss at the top, ties resolved by input order
    println!("{:?}", average_precision(&[0.9, 0.8, 0.1], &[true, true, false]));
    println!("{:?}", average_precision(&[0.9, 0.8, 0.1], &[false, true, true]));
    println!("{:?}", average_precision(&[1.0, 1.0], &[false, true]));
    println!("{:?}", average_precision(&[1.0, 2.0], &[false, false]));

    let rows: Vec<ScoredRow> = [
        (7.5, AnomalyLabel::Global),
        (4.2, AnomalyLabel::Local),
        (3.9, AnomalyLabel::None),
        (3.1, AnomalyLabel::Local),
        (0.4, AnomalyLabel::None),
        (0.2, AnomalyLabel::None),
    ]
    .into_iter()
    .map(|(error, label)| ScoredRow {
        error,
        label,
        department: "PUBLIC WORKS".into(),
    })
    .collect();
    for exclude in [true, false] {
        println!(
            "other class {}: AP_global {:?}, AP_local {:?}",
            if exclude { "excluded" } else { "negative" },
            ap_per_class(&rows, AnomalyLabel::Global, exclude),
            ap_per_class(&rows, AnomalyLabel::Local, exclude),
        );
    }
}
