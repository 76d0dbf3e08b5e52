//! One-layer neighborhood aggregation over the user interaction graph.
//!
//! Per node: `h = act(W·[x_self, mean of neighbor rows])` with a zero
//! vector standing in for the neighbor mean of isolated nodes. Direction
//! modes choose which rows count as neighbors; the bidirectional mode runs
//! two parameter sets over the two directed adjacencies and linearly
//! projects their concatenation back to the output width.

use crate::data::UserInteractionGraph;
use crate::linalg::{hcat, relu, relu_backward, Mat};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Symmetric adjacency; the default.
    Undirected,
    /// Aggregate from parent authors (information flows source → leaves).
    TopDown,
    /// Aggregate from child authors.
    BottomUp,
    /// Both directed passes, concatenated and projected.
    Bidirectional,
}

impl std::str::FromStr for DirectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "undirected" => Ok(Self::Undirected),
            "top_down" => Ok(Self::TopDown),
            "bottom_up" => Ok(Self::BottomUp),
            "bidirectional" => Ok(Self::Bidirectional),
            other => Err(format!(
                "unknown direction mode {other:?}; expected undirected, top_down, bottom_up or bidirectional"
            )),
        }
    }
}

impl std::fmt::Display for DirectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Undirected => "undirected",
            Self::TopDown => "top_down",
            Self::BottomUp => "bottom_up",
            Self::Bidirectional => "bidirectional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, pre: &Mat) -> Mat {
        match self {
            Self::Relu => relu(pre),
            Self::Identity => pre.clone(),
        }
    }

    fn backward(self, pre: &Mat, dy: &Mat) -> Mat {
        match self {
            Self::Relu => relu_backward(pre, dy),
            Self::Identity => dy.clone(),
        }
    }
}

/// Aggregation weights. `w` is (2·in)×out. The optional pair exists only
/// in bidirectional mode: `w_rev` mirrors `w` for the reverse direction
/// and `w_proj` is (2·out)×out.
#[derive(Debug, Clone)]
pub struct SageParams {
    pub w: Mat,
    pub w_rev: Option<Mat>,
    pub w_proj: Option<Mat>,
}

impl SageParams {
    pub fn in_dim(&self) -> usize {
        self.w.nrows() / 2
    }

    pub fn out_dim(&self) -> usize {
        self.w_proj.as_ref().unwrap_or(&self.w).ncols()
    }
}

/// Neighbor index lists for one direction choice.
fn neighbor_lists(graph: &UserInteractionGraph, mode: DirectionMode) -> Vec<Vec<usize>> {
    let n = graph.n_users();
    let mut lists = vec![Vec::new(); n];
    match mode {
        DirectionMode::Undirected => {
            for i in 0..n {
                for j in 0..n {
                    if graph.adjacency[[i, j]] > 0.0 {
                        lists[i].push(j);
                    }
                }
            }
        }
        DirectionMode::TopDown => {
            for &(parent, child) in &graph.directed_edges {
                lists[child].push(parent);
            }
        }
        DirectionMode::BottomUp => {
            for &(parent, child) in &graph.directed_edges {
                lists[parent].push(child);
            }
        }
        DirectionMode::Bidirectional => unreachable!("expanded into two directed passes"),
    }
    lists
}

/// Rows of the neighbor-mean matrix; zero row for isolated nodes.
fn neighbor_mean(x: &Mat, lists: &[Vec<usize>]) -> Mat {
    let mut m = Mat::zeros(x.raw_dim());
    for (i, neigh) in lists.iter().enumerate() {
        if neigh.is_empty() {
            continue;
        }
        let inv = 1.0 / neigh.len() as f64;
        for &j in neigh {
            for c in 0..x.ncols() {
                m[[i, c]] += x[[j, c]] * inv;
            }
        }
    }
    m
}

struct DirPass {
    lists: Vec<Vec<usize>>,
    /// [X, M], the concatenated layer input.
    cat: Mat,
    pre: Mat,
}

fn dir_pass(x: &Mat, lists: Vec<Vec<usize>>, w: &Mat, act: Activation) -> (Mat, DirPass) {
    let cat = hcat(x, &neighbor_mean(x, &lists));
    assert_eq!(cat.ncols(), w.nrows());
    let pre = cat.dot(w);
    let out = act.apply(&pre);
    (out, DirPass { lists, cat, pre })
}

pub struct SageCache {
    primary: DirPass,
    reverse: Option<DirPass>,
    /// Concatenated directional outputs, input to the projection.
    bi_cat: Option<Mat>,
    activation: Activation,
}

impl SageCache {
    /// Smallest pre-activation magnitude; gradient tests resample inputs
    /// when this sits under the kink tolerance.
    pub fn min_abs_pre(&self) -> f64 {
        let mut m = f64::INFINITY;
        for v in self.primary.pre.iter() {
            m = m.min(v.abs());
        }
        if let Some(rev) = &self.reverse {
            for v in rev.pre.iter() {
                m = m.min(v.abs());
            }
        }
        m
    }
}

pub struct SageGrads {
    pub d_w: Mat,
    pub d_w_rev: Option<Mat>,
    pub d_w_proj: Option<Mat>,
    pub d_x: Mat,
}

/// Forward pass; `x` is |U|×in, output |U|×out.
pub fn sage_layer(
    x: &Mat,
    graph: &UserInteractionGraph,
    params: &SageParams,
    mode: DirectionMode,
    act: Activation,
) -> (Mat, SageCache) {
    assert_eq!(x.nrows(), graph.n_users());
    match mode {
        DirectionMode::Bidirectional => {
            let w_rev = params.w_rev.as_ref().expect("bidirectional needs w_rev");
            let w_proj = params.w_proj.as_ref().expect("bidirectional needs w_proj");
            let (out_f, primary) =
                dir_pass(x, neighbor_lists(graph, DirectionMode::TopDown), &params.w, act);
            let (out_b, reverse) =
                dir_pass(x, neighbor_lists(graph, DirectionMode::BottomUp), w_rev, act);
            let bi_cat = hcat(&out_f, &out_b);
            let out = bi_cat.dot(w_proj);
            (
                out,
                SageCache {
                    primary,
                    reverse: Some(reverse),
                    bi_cat: Some(bi_cat),
                    activation: act,
                },
            )
        }
        _ => {
            let (out, primary) = dir_pass(x, neighbor_lists(graph, mode), &params.w, act);
            (
                out,
                SageCache {
                    primary,
                    reverse: None,
                    bi_cat: None,
                    activation: act,
                },
            )
        }
    }
}

/// Backward through one directional pass: returns (dW, dX).
fn dir_backward(pass: &DirPass, w: &Mat, act: Activation, d_out: &Mat) -> (Mat, Mat) {
    let d_pre = act.backward(&pass.pre, d_out);
    let d_w = pass.cat.t().dot(&d_pre);
    let d_cat = d_pre.dot(&w.t());
    let in_dim = w.nrows() / 2;
    let n = pass.cat.nrows();
    let mut d_x = d_cat.slice(ndarray::s![.., ..in_dim]).to_owned();
    // Mean scatter: node i spread dM_i/|N(i)| back to each neighbor row.
    for (i, neigh) in pass.lists.iter().enumerate() {
        if neigh.is_empty() {
            continue;
        }
        let inv = 1.0 / neigh.len() as f64;
        for &j in neigh {
            for c in 0..in_dim {
                d_x[[j, c]] += d_cat[[i, in_dim + c]] * inv;
            }
        }
    }
    debug_assert_eq!(d_x.nrows(), n);
    (d_w, d_x)
}

/// Backward pass for [`sage_layer`].
pub fn sage_layer_backward(
    params: &SageParams,
    cache: &SageCache,
    d_out: &Mat,
) -> SageGrads {
    match (&cache.reverse, &cache.bi_cat) {
        (Some(reverse), Some(bi_cat)) => {
            let w_rev = params.w_rev.as_ref().unwrap();
            let w_proj = params.w_proj.as_ref().unwrap();
            let d_w_proj = bi_cat.t().dot(d_out);
            let d_bi = d_out.dot(&w_proj.t());
            let half = w_proj.nrows() / 2;
            let d_f = d_bi.slice(ndarray::s![.., ..half]).to_owned();
            let d_b = d_bi.slice(ndarray::s![.., half..]).to_owned();
            let (d_w, d_x_f) = dir_backward(&cache.primary, &params.w, cache.activation, &d_f);
            let (d_w_rev, d_x_b) = dir_backward(reverse, w_rev, cache.activation, &d_b);
            SageGrads {
                d_w,
                d_w_rev: Some(d_w_rev),
                d_w_proj: Some(d_w_proj),
                d_x: d_x_f + d_x_b,
            }
        }
        _ => {
            let (d_w, d_x) = dir_backward(&cache.primary, &params.w, cache.activation, d_out);
            SageGrads {
                d_w,
                d_w_rev: None,
                d_w_proj: None,
                d_x,
            }
        }
    }
}
