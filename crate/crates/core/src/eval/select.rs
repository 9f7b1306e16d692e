use super::SweepRow;

/// Among rows whose main accuracy is within `epsilon` of the best, picks the
/// one with the largest `nuis_acc - adv_acc`. Ties go to the smaller
/// `lambda_N`, then smaller `lambda_A`, then smaller `r_N`, so the result does
/// not depend on row order.
pub fn select_config(rows: &[SweepRow], epsilon: f64) -> Option<&SweepRow> {
    let best_main = rows.iter().map(|r| r.main_acc).fold(f64::NEG_INFINITY, f64::max);
    rows.iter()
        .filter(|r| r.main_acc >= best_main - epsilon)
        .min_by(|a, b| {
            let score = |r: &SweepRow| r.nuis_acc - r.adv_acc;
            score(b)
                .total_cmp(&score(a))
                .then(a.point.lambda_n.total_cmp(&b.point.lambda_n))
                .then(a.point.lambda_a.total_cmp(&b.point.lambda_a))
                .then(a.point.r_n.total_cmp(&b.point.r_n))
                .then(b.main_acc.total_cmp(&a.main_acc))
                .then(a.adv_acc.total_cmp(&b.adv_acc))
        })
}
