//! Fused masked attention over index-list neighborhoods.
//!
//! Edge quantities (keys, values, weights) are recomputed per destination
//! instead of being stored, so memory stays proportional to the node count.

use ndarray::Array2;

use crate::Mat;

/// Incoming edges grouped by destination (CSR layout).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    /// `offsets[i]..offsets[i + 1]` indexes the edges into destination `i`.
    pub offsets: Vec<usize>,
    /// Source row of each edge.
    pub src: Vec<usize>,
    /// Scalar attribute of each edge (pilot overlap).
    pub attr: Vec<f64>,
    /// Multiplicative mask of each edge; 0 removes the edge from the softmax.
    pub mask: Vec<f64>,
    /// Number of source rows.
    pub n_src: usize,
}

impl EdgeList {
    pub fn n_dst(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline]
fn row(m: &[f64], d: usize, i: usize) -> &[f64] {
    &m[i * d..(i + 1) * d]
}

fn slice(m: &Mat) -> &[f64] {
    m.as_slice().expect("tape values are in standard layout")
}

/// Normalized weights of the edges into `i`, written into `alpha`.
/// Returns false when no edge carries weight.
#[allow(clippy::too_many_arguments)]
fn weights(qi: &[f64], k: &[f64], d: usize, qp: f64, scale: f64, edges: &EdgeList, i: usize, alpha: &mut Vec<f64>) -> bool {
    alpha.clear();
    let mut max = f64::NEG_INFINITY;
    for e in edges.range(i) {
        let s = scale * (dot(qi, row(k, d, edges.src[e])) + edges.attr[e] * qp);
        alpha.push(s);
        if edges.mask[e] > 0.0 && s > max {
            max = s;
        }
    }
    if max == f64::NEG_INFINITY {
        alpha.iter_mut().for_each(|a| *a = 0.0);
        return false;
    }
    let mut z = 0.0;
    for (a, e) in alpha.iter_mut().zip(edges.range(i)) {
        *a = edges.mask[e] * (*a - max).exp();
        z += *a;
    }
    alpha.iter_mut().for_each(|a| *a /= z);
    true
}

pub(super) fn forward(q: &Mat, k: &Mat, v: &Mat, pilot: Option<&Mat>, edges: &EdgeList) -> Mat {
    let (n, d) = q.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let (qs, ks, vs) = (slice(q), slice(k), slice(v));
    let p = pilot.map(slice);
    let mut out = vec![0.0; n * d];
    let mut alpha = Vec::new();
    for i in 0..n {
        let qi = row(qs, d, i);
        let qp = p.map_or(0.0, |p| dot(qi, p));
        if !weights(qi, ks, d, qp, scale, edges, i, &mut alpha) {
            continue;
        }
        let oi = &mut out[i * d..(i + 1) * d];
        let mut attr_mass = 0.0;
        for (a, e) in alpha.iter().zip(edges.range(i)) {
            if *a == 0.0 {
                continue;
            }
            axpy(oi, *a, row(vs, d, edges.src[e]));
            attr_mass += a * edges.attr[e];
        }
        if let Some(p) = p {
            axpy(oi, attr_mass, p);
        }
    }
    Array2::from_shape_vec((n, d), out).expect("length matches")
}

pub(super) struct AttentionGrads {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    pub pilot: Option<Mat>,
}

pub(super) fn backward(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    pilot: Option<&Mat>,
    edges: &EdgeList,
    g: &Mat,
) -> AttentionGrads {
    let (n, d) = q.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let (qs, ks, vs, gs) = (slice(q), slice(k), slice(v), slice(g));
    let p = pilot.map(slice);
    let mut gq = vec![0.0; n * d];
    let mut gk = vec![0.0; k.len()];
    let mut gv = vec![0.0; v.len()];
    let mut gp = vec![0.0; d];
    let mut alpha = Vec::new();
    let mut dalpha = Vec::new();
    for i in 0..n {
        let qi = row(qs, d, i);
        let qp = p.map_or(0.0, |p| dot(qi, p));
        if !weights(qi, ks, d, qp, scale, edges, i, &mut alpha) {
            continue;
        }
        let gi = row(gs, d, i);
        let gip = p.map_or(0.0, |p| dot(gi, p));

        // d out / d alpha_e = g_i . (v_j + a_e p)
        dalpha.clear();
        let mut avg = 0.0;
        let mut attr_mass = 0.0;
        for (a, e) in alpha.iter().zip(edges.range(i)) {
            let j = edges.src[e];
            let da = dot(gi, row(vs, d, j)) + edges.attr[e] * gip;
            dalpha.push(da);
            avg += a * da;
            attr_mass += a * edges.attr[e];
            if *a != 0.0 {
                axpy(&mut gv[j * d..(j + 1) * d], *a, gi);
            }
        }
        if p.is_some() {
            axpy(&mut gp, attr_mass, gi);
        }

        // softmax: d s_e = alpha_e (d alpha_e - sum_u alpha_u d alpha_u)
        let mut ds_attr = 0.0;
        let gqi = &mut gq[i * d..(i + 1) * d];
        for ((a, da), e) in alpha.iter().zip(&dalpha).zip(edges.range(i)) {
            let ds = a * (da - avg) * scale;
            if ds == 0.0 {
                continue;
            }
            let j = edges.src[e];
            axpy(gqi, ds, row(ks, d, j));
            axpy(&mut gk[j * d..(j + 1) * d], ds, qi);
            ds_attr += ds * edges.attr[e];
        }
        if let Some(p) = p {
            axpy(gqi, ds_attr, p);
            axpy(&mut gp, ds_attr, qi);
        }
    }
    let mat = |v: Vec<f64>, shape: (usize, usize)| Array2::from_shape_vec(shape, v).expect("length matches");
    AttentionGrads {
        q: mat(gq, (n, d)),
        k: mat(gk, k.dim()),
        v: mat(gv, v.dim()),
        pilot: pilot.map(|_| mat(gp, (1, d))),
    }
}
