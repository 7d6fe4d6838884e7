use mqan::check::{check_all, check_dims, Backward, TOLERANCE};
use mqan::model::ModelDims;

fn assert_within(dims: ModelDims, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        for block in check_all(dims, seed, Backward::Exact).unwrap() {
            let e = block.max_rel_error();
            assert!(e <= TOLERANCE, "seed {seed} {}: {e}", block.block);
        }
    }
}

#[test]
fn all_blocks_match_finite_differences() {
    assert_within(check_dims(), 0..5);
}

#[test]
fn stacked_layers_and_heads() {
    assert_within(ModelDims { heads: 2, self_layers: 2, decoder_layers: 2, ..check_dims() }, 0..2);
}

#[test]
fn corrupted_backward_fails_every_block() {
    for block in check_all(check_dims(), 0, Backward::Corrupted).unwrap() {
        assert!(block.max_rel_error() > TOLERANCE, "{}", block.block);
    }
}
