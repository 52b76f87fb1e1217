mod common;

use broadlearn::bls::Branch;
use broadlearn::{train_bls, Architecture, BlsModel};
use common::*;
use nalgebra::DMatrix;

const TOL: f64 = 1e-8;

fn check(model: &BlsModel, label: &str) {
    let oracle = min_norm_lstsq(model.state(), model.targets());
    let diff = rel_diff(model.weights(), &oracle);
    assert!(diff < TOL, "{label}: weights differ from batch oracle by {diff:e}");
    let pen = penrose_residual(model.state(), model.state_pinv());
    assert!(pen < 1e-9, "{label}: Penrose residual {pen:e}");
    let fresh = model.basis().state_matrix(model.inputs()).unwrap().into_inner();
    assert!(max_abs(&(&fresh - model.state())) < 1e-12, "{label}: cached state drifted");
}

fn arch(m: usize, c: usize, k: usize, q: usize, groups: usize, r: usize) -> Architecture {
    Architecture::new(m, c, k, q, groups, r).unwrap()
}

#[test]
fn overdetermined_chain_matches_batch() {
    let x = uniform(150, 6, 1);
    let y = smooth_targets(&x, 2);
    let model = train_bls(&x.rows(0, 120).into_owned(), &y.rows(0, 120).into_owned(), &arch(6, 2, 2, 3, 2, 10), 0.0, 7).unwrap();
    check(&model, "initial");
    let model = model
        .add_samples(&x.rows(120, 30).into_owned(), &y.rows(120, 30).into_owned())
        .unwrap();
    // new rows lie in the row space of a full-column-rank state
    assert_eq!(model.last_branch(), Some(Branch::Dependent));
    check(&model, "samples");
    let model = model.add_enhancement(8, 11).unwrap();
    assert_eq!(model.last_branch(), Some(Branch::Innovation));
    check(&model, "enhancement");
    let model = model.add_features(12).unwrap();
    check(&model, "features");
}

#[test]
fn underdetermined_chain_matches_batch() {
    let x = uniform(40, 5, 2);
    let y = smooth_targets(&x, 3);
    let model = train_bls(&x.rows(0, 20).into_owned(), &y.rows(0, 20).into_owned(), &arch(5, 3, 1, 5, 3, 12), 0.0, 3).unwrap();
    assert!(model.state().ncols() > 20);
    check(&model, "initial");
    let model = model
        .add_samples(&x.rows(20, 6).into_owned(), &y.rows(20, 6).into_owned())
        .unwrap();
    assert_eq!(model.last_branch(), Some(Branch::Innovation));
    check(&model, "samples");
    // full row rank: appended columns are in the column space
    let model = model.add_enhancement(5, 4).unwrap();
    assert_eq!(model.last_branch(), Some(Branch::Dependent));
    check(&model, "enhancement");
    let model = model.add_features(5).unwrap();
    assert_eq!(model.last_branch(), Some(Branch::Dependent));
    check(&model, "features");
    // fit stays exact on every training sample
    let pred = model.predict(model.inputs()).unwrap();
    assert!(max_abs(&(pred - model.targets())) < 1e-8);
}

#[test]
fn duplicate_rows_take_the_dependent_branch() {
    let x = uniform(20, 5, 5);
    let y = smooth_targets(&x, 1);
    let model = train_bls(&x, &y, &arch(5, 1, 1, 5, 2, 15), 0.0, 9).unwrap();
    let dup_x = x.rows(3, 2).into_owned();
    let dup_y = y.rows(3, 2).into_owned();
    let next = model.add_samples(&dup_x, &dup_y).unwrap();
    assert_eq!(next.last_branch(), Some(Branch::Dependent));
    assert!(max_abs(&(next.weights() - model.weights())) < 1e-10);
    check(&next, "duplicates");
}

#[test]
fn mixed_rows_take_the_partial_branch() {
    let x = uniform(26, 5, 6);
    let y = smooth_targets(&x, 2);
    let model = train_bls(&x.rows(0, 20).into_owned(), &y.rows(0, 20).into_owned(), &arch(5, 2, 1, 5, 2, 15), 0.0, 2).unwrap();
    let mut xa = DMatrix::zeros(3, 5);
    let mut ya = DMatrix::zeros(3, 2);
    xa.row_mut(0).copy_from(&x.row(4));
    ya.row_mut(0).copy_from(&y.row(4));
    xa.rows_mut(1, 2).copy_from(&x.rows(20, 2));
    ya.rows_mut(1, 2).copy_from(&y.rows(20, 2));
    let next = model.add_samples(&xa, &ya).unwrap();
    assert_eq!(next.last_branch(), Some(Branch::Partial));
    check(&next, "mixed rows");
}

#[test]
fn columns_beyond_the_row_count_take_the_partial_branch() {
    let x = uniform(60, 6, 8);
    let y = smooth_targets(&x, 1);
    let model = train_bls(&x, &y, &arch(6, 1, 2, 3, 2, 22), 0.0, 1).unwrap();
    assert_eq!(model.state().ncols(), 50);
    let next = model.add_enhancement(20, 3).unwrap();
    assert_eq!(next.last_branch(), Some(Branch::Partial));
    check(&next, "partial columns");
}

#[test]
fn redundant_feature_group_is_handled() {
    // identity features with q = M + 1 already span [X, 1], so the new
    // feature columns are dependent while its extension nodes are not
    let x = uniform(120, 4, 9);
    let y = smooth_targets(&x, 1);
    let model = train_bls(&x, &y, &arch(4, 1, 1, 5, 2, 8), 0.0, 4).unwrap();
    let next = model.add_features(6).unwrap();
    assert_eq!(next.last_branch(), Some(Branch::Partial));
    check(&next, "redundant features");
    let next = next.add_samples(&uniform(10, 4, 10), &smooth_targets(&uniform(10, 4, 10), 1)).unwrap();
    check(&next, "samples after redundant features");
}

#[test]
fn increments_are_deterministic_and_survive_json() {
    let x = uniform(80, 4, 12);
    let y = smooth_targets(&x, 1);
    let a = train_bls(&x, &y, &arch(4, 1, 2, 2, 2, 6), 0.0, 5).unwrap();
    let reloaded = BlsModel::from_json(&a.to_json().unwrap()).unwrap();
    let xa = uniform(7, 4, 13);
    let ya = smooth_targets(&xa, 1);
    let b1 = a.add_samples(&xa, &ya).unwrap().add_enhancement(4, 2).unwrap();
    let b2 = reloaded.add_samples(&xa, &ya).unwrap().add_enhancement(4, 2).unwrap();
    assert_eq!(b1.weights(), b2.weights());
    assert_eq!(b1.state_pinv(), b2.state_pinv());
}
