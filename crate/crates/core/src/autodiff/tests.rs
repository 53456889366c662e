use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Mat {
    Array2::from_shape_fn((r, c), |_| rng.random_range(lo..hi))
}

#[test]
fn identity_and_inverse_pair() {
    let mut t = Tape::new();
    let x = t.input("x", array![[1.5, 2.0], [0.25, 3.0]]);
    let z = t.constant(Array2::zeros((2, 2)));
    let y = t.add(x, z).unwrap();
    assert_eq!(t.value(y), t.value(x));
    let l = t.log(x).unwrap();
    let e = t.exp(l).unwrap();
    for (a, b) in t.value(e).iter().zip(t.value(x).iter()) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

#[test]
fn sum_and_half_norm_gradients() {
    let mut t = Tape::new();
    let xv = array![[1.0, -2.0, 0.5]];
    let x = t.input("x", xv.clone());
    let s = t.sum(x).unwrap();
    assert_eq!(t.gradient(s).unwrap().get(x), Array2::<f64>::ones((1, 3)));

    let sq = t.square(x).unwrap();
    let ss = t.sum(sq).unwrap();
    let half = t.scale(ss, 0.5).unwrap();
    assert_eq!(t.gradient(half).unwrap().get(x), xv);
}

#[test]
fn non_scalar_root_rejected() {
    let mut t = Tape::new();
    let x = t.input("x", Array2::ones((2, 1)));
    assert_eq!(t.gradient(x).err(), Some(AdError::NonScalarRoot(2, 1)));
}

#[test]
fn shape_errors_name_the_op() {
    let mut t = Tape::new();
    let a = t.input("a", Array2::ones((2, 3)));
    let b = t.input("b", Array2::ones((2, 3)));
    match t.matmul(a, b) {
        Err(AdError::Shape { op, shapes }) => {
            assert_eq!(op, "matmul");
            assert_eq!(shapes, vec![(2, 3), (2, 3)]);
        }
        other => panic!("{other:?}"),
    }
    let c = t.input("c", Array2::ones((3, 2)));
    assert!(matches!(t.add(a, c), Err(AdError::Shape { op: "add", .. })));

    // rebinding with an incompatible shape surfaces at evaluation time
    let p = t.matmul(a, c).unwrap();
    let s = t.sum(p).unwrap();
    let bad = HashMap::from([("c".to_string(), Array2::ones((4, 2)))]);
    assert!(matches!(t.evaluate(s, &bad), Err(AdError::Shape { op: "matmul", .. })));
    assert!(matches!(
        t.evaluate(s, &HashMap::from([("nope".to_string(), Array2::ones((1, 1)))])),
        Err(AdError::UnknownInput(_))
    ));
}

#[test]
fn evaluate_is_deterministic_and_rebinds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tape::new();
    let a = t.input("a", rand_mat(&mut rng, 4, 5, -1.0, 1.0));
    let w = t.input("w", rand_mat(&mut rng, 5, 3, -1.0, 1.0));
    let h = t.matmul(a, w).unwrap();
    let h = t.softplus(h).unwrap();
    let r = t.log_sum_exp(h).unwrap();
    let first = t.value(r).clone();
    let again = t.evaluate(r, &HashMap::new()).unwrap();
    assert_eq!(first, again);
    let w2 = rand_mat(&mut rng, 5, 3, -1.0, 1.0);
    let fresh = {
        let mut t2 = Tape::new();
        let a2 = t2.input("a", t.value(a).clone());
        let w2v = t2.input("w", w2.clone());
        let h = t2.matmul(a2, w2v).unwrap();
        let h = t2.softplus(h).unwrap();
        let r = t2.log_sum_exp(h).unwrap();
        t2.value(r).clone()
    };
    let rebound = t.evaluate(r, &HashMap::from([("w".to_string(), w2)])).unwrap();
    assert_eq!(rebound, fresh);
}

#[test]
fn unreachable_inputs_get_zero_and_nodes_visited_once() {
    let mut t = Tape::new();
    let x = t.input("x", array![[1.0, 2.0]]);
    let y = t.input("y", array![[3.0, 4.0]]);
    let _unused = t.exp(y).unwrap();
    let a = t.square(x).unwrap();
    let b = t.mul(a, x).unwrap(); // x reached along two paths
    let s = t.sum(b).unwrap();
    let g = t.gradient(s).unwrap();
    assert_eq!(g.get(y), Array2::<f64>::zeros((1, 2)));
    assert_eq!(g.by_name("y").unwrap(), Array2::<f64>::zeros((1, 2)));
    // reachable: x, a, b, s
    assert_eq!(g.visited, 4);
    assert_eq!(g.get(x), array![[3.0, 12.0]]);
}

#[test]
fn gradient_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut t = Tape::new();
    let x = t.input("x", rand_mat(&mut rng, 3, 4, 0.1, 1.0));
    let f = {
        let e = t.exp(x).unwrap();
        t.sum(e).unwrap()
    };
    let g = {
        let l = t.log(x).unwrap();
        let s = t.square(l).unwrap();
        t.sum(s).unwrap()
    };
    let fg = t.add(f, g).unwrap();
    let gf = t.gradient(f).unwrap().get(x);
    let gg = t.gradient(g).unwrap().get(x);
    let gfg = t.gradient(fg).unwrap().get(x);
    for ((a, b), c) in gf.iter().zip(gg.iter()).zip(gfg.iter()) {
        assert!((a + b - c).abs() < 1e-12 * c.abs().max(1.0));
    }
}

#[test]
fn relu_and_softplus_adjoints() {
    let mut t = Tape::new();
    let x = t.input("x", array![[-1.0, 0.0, 2.0]]);
    let r = t.relu(x).unwrap();
    let s = t.sum(r).unwrap();
    assert_eq!(t.gradient(s).unwrap().get(x), array![[0.0, 0.0, 1.0]]);

    let xs = array![[-30.0, -2.0, 0.0, 0.7, 40.0]];
    let mut t = Tape::new();
    let x = t.input("x", xs.clone());
    let sp = t.softplus(x).unwrap();
    let s = t.sum(sp).unwrap();
    let g = t.gradient(s).unwrap().get(x);
    for (gv, xv) in g.iter().zip(xs.iter()) {
        let logistic = 1.0 / (1.0 + (-xv).exp());
        assert!((gv - logistic).abs() < 1e-12);
    }
    // values stay finite for large magnitudes
    assert!(t.value(sp).iter().all(|v| v.is_finite()));
    assert!((t.value(sp)[[0, 4]] - 40.0).abs() < 1e-12);
}

#[test]
fn linear_root_fd_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = Tape::new();
    let x = t.input("x", rand_mat(&mut rng, 6, 10, -1.0, 1.0));
    let w = t.constant(rand_mat(&mut rng, 10, 1, -1.0, 1.0));
    let y = t.matmul(x, w).unwrap();
    let s = t.sum(y).unwrap();
    let rep = finite_difference_check(&mut t, s, &["x"], 1e-3, 60, &mut rng).unwrap();
    assert_eq!(rep.checked, 60);
    assert!(rep.max_rel_error < 1e-10, "{rep:?}");
}

#[test]
fn relu_away_from_kinks_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut t = Tape::new();
    // keep pre-activations well away from 0
    let xv = rand_mat(&mut rng, 8, 8, 0.5, 1.5).mapv(|v| if rng.random_bool(0.5) { v } else { -v });
    let x = t.input("x", xv);
    let r = t.relu(x).unwrap();
    let sq = t.square(r).unwrap();
    let s = t.sum(sq).unwrap();
    let rep = finite_difference_check(&mut t, s, &["x"], 1e-6, 64, &mut rng).unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

/// Every primitive in one graph, checked against central differences.
#[test]
fn all_primitives_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = Tape::new();
    let a = t.input("a", rand_mat(&mut rng, 4, 3, 0.2, 1.0));
    let b = t.input("b", rand_mat(&mut rng, 3, 5, -1.0, 1.0));
    let row = t.input("row", rand_mat(&mut rng, 1, 5, -0.5, 0.5));
    let col = t.input("col", rand_mat(&mut rng, 4, 1, 0.5, 1.5));

    let h = t.matmul(a, b).unwrap(); // 4x5
    let h = t.add(h, row).unwrap();
    let n = t.row_normalize(h, 1e-5).unwrap();
    // applied after normalization so the row scale is not cancelled
    let n = t.mul(n, col).unwrap();
    let n = t.div(n, col).unwrap();
    let n = t.div(n, col).unwrap();
    let sp = t.softplus(n).unwrap();
    let sq = t.sqrt(sp).unwrap();
    let ht = t.transpose(sq).unwrap(); // 5x4
    let g = t.gather_rows(ht, Arc::from(vec![0, 2, 2, 4, 1])).unwrap();
    let seg = t.segment_sum(g, Arc::from(vec![0, 1, 0, 2, 1]), 3).unwrap(); // 3x4
    let rs = t.reshape(seg, 2, 6).unwrap();
    let ex = t.exp(rs).unwrap();
    let lg = t.log(ex).unwrap();
    let cs = t.col_sum(lg).unwrap();
    let rsum = t.row_sum(a).unwrap();
    let off = t.offset(rsum, 0.3).unwrap();
    let lse = t.log_sum_exp(cs).unwrap();
    let lse2 = t.log_sum_exp(off).unwrap();
    let tot = t.sub(lse, lse2).unwrap();
    let tot = t.scale(tot, 1.7).unwrap();
    let sq2 = t.square(tot).unwrap();
    let rep = finite_difference_check(&mut t, sq2, &["a", "b", "row", "col"], 1e-5, 200, &mut rng).unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn projection_rows_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut t = Tape::new();
    // row 0 outside the ball, row 1 inside, row 2 with clamped entries
    let x = t.input("x", array![[0.6, 0.5, 0.7], [0.1, 0.05, 0.2], [-0.4, 0.8, 0.3]]);
    let w = t.constant(rand_mat(&mut rng, 3, 3, -1.0, 1.0));
    let p = t.project_rows(x, 0.25).unwrap();
    let h = t.mul(p, w).unwrap();
    let s = t.sum(h).unwrap();
    let sq = t.square(s).unwrap();
    let rep = finite_difference_check(&mut t, sq, &["x"], 1e-7, 9, &mut rng).unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    assert!(crate::feasible::is_feasible(t.value(p), 4, 0.0).feasible);
}

fn small_edges() -> EdgeList {
    // 4 destinations over 4 sources; destination 3 has only a masked edge
    EdgeList {
        offsets: vec![0, 2, 5, 6, 7],
        src: vec![1, 2, 0, 2, 3, 0, 1],
        attr: vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        mask: vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        n_src: 4,
    }
}

/// The same attention, assembled from generic primitives.
fn composed_attention(t: &mut Tape, q: Var, k: Var, v: Var, p: Var, edges: &EdgeList) -> Var {
    let dst: Vec<usize> = (0..edges.n_dst()).flat_map(|i| edges.range(i).map(move |_| i)).collect();
    let dst: Arc<[usize]> = Arc::from(dst);
    let src: Arc<[usize]> = Arc::from(edges.src.clone());
    let d = t.shape(q).1;
    let attr = t.constant(Array2::from_shape_vec((edges.n_edges(), 1), edges.attr.clone()).unwrap());
    let mask = t.constant(Array2::from_shape_vec((edges.n_edges(), 1), edges.mask.clone()).unwrap());
    let ap = t.matmul(attr, p).unwrap(); // E x D
    let kj = t.gather_rows(k, src.clone()).unwrap();
    let key = t.add(kj, ap).unwrap();
    let qi = t.gather_rows(q, dst.clone()).unwrap();
    let prod = t.mul(qi, key).unwrap();
    let s = t.row_sum(prod).unwrap();
    let s = t.scale(s, 1.0 / (d as f64).sqrt()).unwrap();
    let ex = t.exp(s).unwrap();
    let ex = t.mul(ex, mask).unwrap();
    let z = t.segment_sum(ex, dst.clone(), edges.n_dst()).unwrap();
    let z = t.offset(z, 1e-300).unwrap();
    let ze = t.gather_rows(z, dst.clone()).unwrap();
    let alpha = t.div(ex, ze).unwrap();
    let vj = t.gather_rows(v, src).unwrap();
    let val = t.add(vj, ap).unwrap();
    let weighted = t.mul(val, alpha).unwrap();
    t.segment_sum(weighted, dst, edges.n_dst()).unwrap()
}

#[test]
fn fused_attention_matches_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let edges = Arc::new(small_edges());
    let (qv, kv, vv, pv) = (
        rand_mat(&mut rng, 4, 3, -1.0, 1.0),
        rand_mat(&mut rng, 4, 3, -1.0, 1.0),
        rand_mat(&mut rng, 4, 3, -1.0, 1.0),
        rand_mat(&mut rng, 1, 3, -1.0, 1.0),
    );
    let weights = rand_mat(&mut rng, 4, 3, -1.0, 1.0);
    let build = |fused: bool| {
        let mut t = Tape::new();
        let q = t.input("q", qv.clone());
        let k = t.input("k", kv.clone());
        let v = t.input("v", vv.clone());
        let p = t.input("p", pv.clone());
        let out = if fused {
            t.edge_attention(q, k, v, Some(p), edges.clone()).unwrap()
        } else {
            composed_attention(&mut t, q, k, v, p, &edges)
        };
        let w = t.constant(weights.clone());
        let h = t.mul(out, w).unwrap();
        let s = t.sum(h).unwrap();
        let g = t.gradient(s).unwrap();
        let grads: Vec<Mat> = [q, k, v, p].iter().map(|&x| g.get(x)).collect();
        (t.value(out).clone(), grads)
    };
    let (fo, fg) = build(true);
    let (co, cg) = build(false);
    for (a, b) in fo.iter().zip(co.iter()) {
        assert!((a - b).abs() < 1e-12, "{fo} vs {co}");
    }
    // fully masked destination yields a zero row
    assert!(fo.row(3).iter().all(|&x| x == 0.0));
    for (ga, gb) in fg.iter().zip(&cg) {
        for (a, b) in ga.iter().zip(gb.iter()) {
            assert!((a - b).abs() < 1e-12, "{ga} vs {gb}");
        }
    }
}

#[test]
fn fused_attention_fd_and_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let edges = Arc::new(small_edges());
    let mut t = Tape::new();
    let q = t.input("q", rand_mat(&mut rng, 4, 5, -1.0, 1.0));
    let k = t.input("k", rand_mat(&mut rng, 4, 5, -1.0, 1.0));
    let v = t.input("v", rand_mat(&mut rng, 4, 5, -1.0, 1.0));
    let p = t.input("p", rand_mat(&mut rng, 1, 5, -1.0, 1.0));
    let out = t.edge_attention(q, k, v, Some(p), edges.clone()).unwrap();
    let w = t.constant(rand_mat(&mut rng, 4, 5, -1.0, 1.0));
    let h = t.mul(out, w).unwrap();
    let s = t.sum(h).unwrap();
    let s2 = t.square(s).unwrap();
    let rep = finite_difference_check(&mut t, s2, &["q", "k", "v", "p"], 1e-5, 65, &mut rng).unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");

    // identical keys and attributes -> plain average of the values
    let uniform = Arc::new(EdgeList {
        offsets: vec![0, 3],
        src: vec![0, 1, 2],
        attr: vec![0.5; 3],
        mask: vec![1.0; 3],
        n_src: 3,
    });
    let mut t = Tape::new();
    let q = t.input("q", array![[0.3, -0.2]]);
    let k = t.input("k", Array2::from_elem((3, 2), 0.7));
    let vv = array![[1.0, 2.0], [3.0, 5.0], [-1.0, 2.0]];
    let v = t.input("v", vv.clone());
    let out = t.edge_attention(q, k, v, None, uniform).unwrap();
    let mean = vv.mean_axis(ndarray::Axis(0)).unwrap();
    assert!((t.value(out)[[0, 0]] - mean[0]).abs() < 1e-12);
    assert!((t.value(out)[[0, 1]] - mean[1]).abs() < 1e-12);
}

#[test]
fn non_finite_nodes_are_located() {
    let mut t = Tape::new();
    let x = t.input("x", array![[1.0, -1.0]]);
    let l = t.log(x).unwrap();
    let _ = t.sum(l).unwrap();
    assert_eq!(t.first_non_finite(), Some((1, "log")));
}
