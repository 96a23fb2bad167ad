use relit_net::gradsuite::{run_group, toy_network, CaseResult, Group, GROUPS, SEEDS};

fn assert_all(results: &[CaseResult]) {
    assert!(!results.is_empty());
    for c in results {
        assert!(
            c.passed(),
            "{} seed {}: relative error {} at {:?} ({} entries)",
            c.op,
            c.seed,
            c.report.max_rel_error,
            c.report.worst,
            c.report.checked
        );
    }
}

fn group(name: &str) -> Group {
    GROUPS.iter().find(|(n, _)| *n == name).unwrap().1
}

fn run(name: &str) {
    assert_all(&run_group(group(name), &SEEDS).unwrap());
}

#[test]
fn conv2d() {
    run("conv2d");
}

#[test]
fn pool_and_upsample() {
    run("pool_and_upsample");
}

#[test]
fn concat_and_slice() {
    run("concat_and_slice");
}

#[test]
fn elementwise() {
    run("elementwise");
}

#[test]
fn matmul_all_layouts() {
    run("matmul");
}

#[test]
fn softmax_rows() {
    run("softmax_rows");
}

#[test]
fn reductions() {
    run("reductions");
}

#[test]
fn self_and_cross_attention() {
    run("attention");
}

#[test]
fn both_losses() {
    run("losses");
}

#[test]
fn toy_network_train_loss() {
    assert_all(&[toy_network().unwrap()]);
}
