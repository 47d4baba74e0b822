mod common;

#[test]
fn random_draws_stay_in_unit_range() {
    for seed in 0..200 {
        common::attention_range_draw(seed).unwrap();
    }
}
