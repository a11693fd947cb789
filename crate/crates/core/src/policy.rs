//! Recurrent policy network.
//!
//! ```text
//! h_t   = LSTM([rel_emb(r_{t-1}); ent_emb(e_t)], h_{t-1}, c_{t-1})
//! z_t   = W2 · ReLU(W1 · [h_t; rel_emb(r_q)] + b1) + b2
//! logit = ⟨[rel_emb(r_i); ent_emb(e_i)], z_t⟩   for each action i
//! π_t   = softmax(logits)
//! ```
//!
//! Gradients are computed by hand: a forward pass is recorded on a
//! [`Tape`] and [`backward_into`] replays it in reverse given the gradient
//! of the loss with respect to each step's logits.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::kg::{Action, EntityId, RelationId};
use crate::real::Real;
use crate::rng;
use crate::tensor::{axpy, dot, sigmoid, softmax, Matrix};

/// Network shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub entities: usize,
    /// Augmented relation count (NO_OP, base and inverse).
    pub relations: usize,
    /// Embedding width `d`; actions are `2d` wide.
    pub embed: usize,
    /// LSTM hidden width `H`.
    pub hidden: usize,
    /// Width `F` of the ReLU layer.
    pub ff: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<(), PolicyError> {
        for (name, v) in [
            ("entities", self.entities),
            ("relations", self.relations),
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("ff", self.ff),
        ] {
            if v == 0 {
                return Err(PolicyError::ZeroDimension(name));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let Dims { entities: ne, relations: nr, embed: d, hidden: h, ff: f } = *self;
        ne * d + nr * d + 4 * h * 2 * d + 4 * h * h + 4 * h + f * (h + d) + f + 2 * d * f + 2 * d
    }

    /// `(name, rows, cols)` of every tensor, in storage order.
    pub fn tensor_shapes(&self) -> [(&'static str, usize, usize); 9] {
        let Dims { entities: ne, relations: nr, embed: d, hidden: h, ff: f } = *self;
        [
            (TENSOR_NAMES[0], ne, d),
            (TENSOR_NAMES[1], nr, d),
            (TENSOR_NAMES[2], 4 * h, 2 * d),
            (TENSOR_NAMES[3], 4 * h, h),
            (TENSOR_NAMES[4], 4 * h, 1),
            (TENSOR_NAMES[5], f, h + d),
            (TENSOR_NAMES[6], f, 1),
            (TENSOR_NAMES[7], 2 * d, f),
            (TENSOR_NAMES[8], 2 * d, 1),
        ]
    }
}

pub const TENSOR_NAMES: [&str; 9] = [
    "entity_embeddings",
    "relation_embeddings",
    "lstm_input_weights",
    "lstm_recurrent_weights",
    "lstm_bias",
    "w1",
    "b1",
    "w2",
    "b2",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("dimension `{0}` must be positive")]
    ZeroDimension(&'static str),
    #[error("tensor `{name}` has {found} values, expected {expected}")]
    TensorSize { name: &'static str, expected: usize, found: usize },
    #[error("expected {expected} tensors, found {found}")]
    TensorCount { expected: usize, found: usize },
}

/// All trainable tensors. LSTM gates are stacked in the order
/// input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<T> {
    dims: Dims,
    pub entity_emb: Matrix<T>,
    pub relation_emb: Matrix<T>,
    pub lstm_wx: Matrix<T>,
    pub lstm_wh: Matrix<T>,
    pub lstm_b: Vec<T>,
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

fn xavier<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let bound = xavier_bound(rows, cols);
    let data = (0..rows * cols).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Matrix::from_vec(rows, cols, data)
}

/// `sqrt(6 / (rows + cols))`.
pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    num_traits::Float::sqrt(6.0 / (rows + cols) as f64)
}

impl<T: Real> PolicyParams<T> {
    /// Xavier-uniform weights, zero biases, forget-gate bias `+1`.
    pub fn init(dims: Dims, seed: u64) -> Result<Self, PolicyError> {
        dims.validate()?;
        let Dims { entities: ne, relations: nr, embed: d, hidden: h, ff: f } = dims;
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut lstm_b = vec![T::zero(); 4 * h];
        for b in &mut lstm_b[h..2 * h] {
            *b = T::one();
        }
        Ok(PolicyParams {
            dims,
            entity_emb: xavier(ne, d, &mut rng),
            relation_emb: xavier(nr, d, &mut rng),
            lstm_wx: xavier(4 * h, 2 * d, &mut rng),
            lstm_wh: xavier(4 * h, h, &mut rng),
            lstm_b,
            w1: xavier(f, h + d, &mut rng),
            b1: vec![T::zero(); f],
            w2: xavier(2 * d, f, &mut rng),
            b2: vec![T::zero(); 2 * d],
        })
    }

    /// Rebuilds parameters from flat tensors in [`TENSOR_NAMES`] order.
    pub fn from_tensors(dims: Dims, tensors: Vec<Vec<T>>) -> Result<Self, PolicyError> {
        dims.validate()?;
        let shapes = dims.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(PolicyError::TensorCount { expected: shapes.len(), found: tensors.len() });
        }
        for ((name, r, c), t) in shapes.iter().zip(&tensors) {
            if t.len() != r * c {
                return Err(PolicyError::TensorSize { name, expected: r * c, found: t.len() });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = |i: usize| Matrix::from_vec(shapes[i].1, shapes[i].2, it.next().unwrap());
        Ok(PolicyParams {
            dims,
            entity_emb: next(0),
            relation_emb: next(1),
            lstm_wx: next(2),
            lstm_wh: next(3),
            lstm_b: next(4).as_slice().to_vec(),
            w1: next(5),
            b1: next(6).as_slice().to_vec(),
            w2: next(7),
            b2: next(8).as_slice().to_vec(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn tensors(&self) -> [&[T]; 9] {
        [
            self.entity_emb.as_slice(),
            self.relation_emb.as_slice(),
            self.lstm_wx.as_slice(),
            self.lstm_wh.as_slice(),
            &self.lstm_b,
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 9] {
        [
            self.entity_emb.as_mut_slice(),
            self.relation_emb.as_mut_slice(),
            self.lstm_wx.as_mut_slice(),
            self.lstm_wh.as_mut_slice(),
            &mut self.lstm_b,
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Real>(&self) -> PolicyParams<U> {
        let tensors = self
            .tensors()
            .iter()
            .map(|t| t.iter().map(|x| U::from_f64(x.as_f64())).collect())
            .collect();
        PolicyParams::from_tensors(self.dims, tensors).expect("same dims")
    }

    /// `[rel_emb(r); ent_emb(e)]` dotted with `z`.
    #[inline]
    fn action_logit(&self, a: &Action, z: &[T]) -> T {
        let d = self.dims.embed;
        dot(self.relation_emb.row(a.relation.index()), &z[..d])
            + dot(self.entity_emb.row(a.entity.index()), &z[d..])
    }
}

/// LSTM state after `step` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryState<T> {
    pub hidden: Vec<T>,
    pub cell: Vec<T>,
    pub step: usize,
}

impl<T: Real> HistoryState<T> {
    pub fn zero(hidden: usize) -> Self {
        HistoryState { hidden: vec![T::zero(); hidden], cell: vec![T::zero(); hidden], step: 0 }
    }
}

/// Softmax policy over one action list.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution<T> {
    pub probabilities: Vec<T>,
    pub logits: Vec<T>,
    /// Log-softmax of the logits.
    pub log_probabilities: Vec<T>,
    pub actions: Vec<Action>,
}

impl<T: Real> ActionDistribution<T> {
    fn from_logits(logits: Vec<T>, actions: Vec<Action>) -> Self {
        let probabilities = softmax(&logits);
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<T>().ln();
        let log_probabilities = logits.iter().map(|&l| l - lse).collect();
        ActionDistribution { probabilities, logits, log_probabilities, actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -self
            .probabilities
            .iter()
            .zip(&self.log_probabilities)
            .fold(T::zero(), |acc, (&p, &lp)| acc + p * lp)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Activations of one forward step kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepRecord<T> {
    pub prev_relation: RelationId,
    pub entity: EntityId,
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
    u: Vec<T>,
    pre1: Vec<T>,
    a1: Vec<T>,
    z: Vec<T>,
    pub distribution: ActionDistribution<T>,
}

struct LstmOut<T> {
    x: Vec<T>,
    gates: Vec<T>,
    cell: Vec<T>,
    tanh_c: Vec<T>,
    hidden: Vec<T>,
}

fn lstm_forward<T: Real>(
    params: &PolicyParams<T>,
    history: &HistoryState<T>,
    prev_relation: RelationId,
    entity: EntityId,
) -> LstmOut<T> {
    let h = params.dims.hidden;
    let mut x = Vec::with_capacity(2 * params.dims.embed);
    x.extend_from_slice(params.relation_emb.row(prev_relation.index()));
    x.extend_from_slice(params.entity_emb.row(entity.index()));

    let mut gates = params.lstm_b.clone();
    params.lstm_wx.gemv_acc(&x, &mut gates);
    params.lstm_wh.gemv_acc(&history.hidden, &mut gates);
    for (k, g) in gates.iter_mut().enumerate() {
        *g = if (2 * h..3 * h).contains(&k) { g.tanh() } else { sigmoid(*g) };
    }
    let (i, f, g, o) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..3 * h], &gates[3 * h..]);
    let cell: Vec<T> = (0..h).map(|k| f[k] * history.cell[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = cell.iter().map(|c| c.tanh()).collect();
    let hidden = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    LstmOut { x, gates, cell, tanh_c, hidden }
}

/// One LSTM update on `[rel_emb(prev_relation); ent_emb(entity)]`.
pub fn lstm_step<T: Real>(
    params: &PolicyParams<T>,
    history: &HistoryState<T>,
    prev_relation: RelationId,
    entity: EntityId,
) -> HistoryState<T> {
    let out = lstm_forward(params, history, prev_relation, entity);
    HistoryState { hidden: out.hidden, cell: out.cell, step: history.step + 1 }
}

struct ScoreOut<T> {
    u: Vec<T>,
    pre1: Vec<T>,
    a1: Vec<T>,
    z: Vec<T>,
    dist: ActionDistribution<T>,
}

fn score_forward<T: Real>(
    params: &PolicyParams<T>,
    hidden: &[T],
    query_relation: RelationId,
    actions: &[Action],
) -> ScoreOut<T> {
    assert!(!actions.is_empty(), "action list always holds the self-loop");
    let mut u = Vec::with_capacity(hidden.len() + params.dims.embed);
    u.extend_from_slice(hidden);
    u.extend_from_slice(params.relation_emb.row(query_relation.index()));
    let mut pre1 = params.b1.clone();
    params.w1.gemv_acc(&u, &mut pre1);
    let a1: Vec<T> = pre1.iter().map(|&p| p.max(T::zero())).collect();
    let mut z = params.b2.clone();
    params.w2.gemv_acc(&a1, &mut z);
    let logits = actions.iter().map(|a| params.action_logit(a, &z)).collect();
    let dist = ActionDistribution::from_logits(logits, actions.to_vec());
    ScoreOut { u, pre1, a1, z, dist }
}

/// Policy over `actions` given the current history and query relation.
pub fn score_actions<T: Real>(
    params: &PolicyParams<T>,
    history: &HistoryState<T>,
    query_relation: RelationId,
    actions: &[Action],
) -> ActionDistribution<T> {
    score_forward(params, &history.hidden, query_relation, actions).dist
}

/// Recorded forward pass of one rollout.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    query_relation: RelationId,
    state: HistoryState<T>,
    steps: Vec<StepRecord<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new(params: &PolicyParams<T>, query_relation: RelationId) -> Self {
        Tape {
            query_relation,
            state: HistoryState::zero(params.dims.hidden),
            steps: Vec::new(),
        }
    }

    pub fn query_relation(&self) -> RelationId {
        self.query_relation
    }

    /// Feeds `(prev_relation, entity)` to the LSTM, scores `actions` and
    /// records everything needed for backprop.
    pub fn push(
        &mut self,
        params: &PolicyParams<T>,
        prev_relation: RelationId,
        entity: EntityId,
        actions: &[Action],
    ) -> &ActionDistribution<T> {
        let lstm = lstm_forward(params, &self.state, prev_relation, entity);
        let score = score_forward(params, &lstm.hidden, self.query_relation, actions);
        let next = HistoryState {
            hidden: lstm.hidden,
            cell: lstm.cell,
            step: self.state.step + 1,
        };
        let prev = core::mem::replace(&mut self.state, next);
        self.steps.push(StepRecord {
            prev_relation,
            entity,
            x: lstm.x,
            h_prev: prev.hidden,
            c_prev: prev.cell,
            gates: lstm.gates,
            tanh_c: lstm.tanh_c,
            u: score.u,
            pre1: score.pre1,
            a1: score.a1,
            z: score.z,
            distribution: score.dist,
        });
        &self.steps.last().unwrap().distribution
    }

    pub fn state(&self) -> &HistoryState<T> {
        &self.state
    }

    pub fn steps(&self) -> &[StepRecord<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Loss gradients with respect to [`PolicyParams`]. Embedding gradients are
/// kept per touched row; untouched rows are implicitly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    dims: Dims,
    pub entity_rows: BTreeMap<u32, Vec<T>>,
    pub relation_rows: BTreeMap<u32, Vec<T>>,
    pub lstm_wx: Matrix<T>,
    pub lstm_wh: Matrix<T>,
    pub lstm_b: Vec<T>,
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { embed: d, hidden: h, ff: f, .. } = dims;
        Gradients {
            dims,
            entity_rows: BTreeMap::new(),
            relation_rows: BTreeMap::new(),
            lstm_wx: Matrix::zeros(4 * h, 2 * d),
            lstm_wh: Matrix::zeros(4 * h, h),
            lstm_b: vec![T::zero(); 4 * h],
            w1: Matrix::zeros(f, h + d),
            b1: vec![T::zero(); f],
            w2: Matrix::zeros(2 * d, f),
            b2: vec![T::zero(); 2 * d],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn entity_row(&mut self, e: EntityId) -> &mut [T] {
        let d = self.dims.embed;
        self.entity_rows.entry(e.0).or_insert_with(|| vec![T::zero(); d])
    }

    fn relation_row(&mut self, r: RelationId) -> &mut [T] {
        let d = self.dims.embed;
        self.relation_rows.entry(r.0).or_insert_with(|| vec![T::zero(); d])
    }

    fn dense_parts(&self) -> [&[T]; 7] {
        [
            self.lstm_wx.as_slice(),
            self.lstm_wh.as_slice(),
            &self.lstm_b,
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }

    fn dense_parts_mut(&mut self) -> [&mut [T]; 7] {
        [
            self.lstm_wx.as_mut_slice(),
            self.lstm_wh.as_mut_slice(),
            &mut self.lstm_b,
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (e, row) in &other.entity_rows {
            axpy(T::one(), row, self.entity_row(EntityId(*e)));
        }
        for (r, row) in &other.relation_rows {
            axpy(T::one(), row, self.relation_row(RelationId(*r)));
        }
        for (dst, src) in self.dense_parts_mut().into_iter().zip(other.dense_parts()) {
            axpy(T::one(), src, dst);
        }
    }

    pub fn scale(&mut self, s: T) {
        let rows = self.entity_rows.values_mut().chain(self.relation_rows.values_mut());
        for row in rows {
            row.iter_mut().for_each(|x| *x *= s);
        }
        for part in self.dense_parts_mut() {
            part.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Gradient of tensor `idx` (see [`TENSOR_NAMES`]) as a dense vector.
    pub fn dense(&self, idx: usize) -> Vec<T> {
        let d = self.dims.embed;
        let sparse = |rows: &BTreeMap<u32, Vec<T>>, n: usize| {
            let mut out = vec![T::zero(); n * d];
            for (r, row) in rows {
                out[*r as usize * d..(*r as usize + 1) * d].copy_from_slice(row);
            }
            out
        };
        match idx {
            0 => sparse(&self.entity_rows, self.dims.entities),
            1 => sparse(&self.relation_rows, self.dims.relations),
            i => self.dense_parts()[i - 2].to_vec(),
        }
    }

    /// Calls `f(flat_index, grad)` for every potentially nonzero entry of
    /// tensor `idx`, in ascending index order.
    pub fn for_each_in(&self, idx: usize, mut f: impl FnMut(usize, T)) {
        let d = self.dims.embed;
        match idx {
            0 | 1 => {
                let rows = if idx == 0 { &self.entity_rows } else { &self.relation_rows };
                for (r, row) in rows {
                    for (k, &g) in row.iter().enumerate() {
                        f(*r as usize * d + k, g);
                    }
                }
            }
            i => {
                for (k, &g) in self.dense_parts()[i - 2].iter().enumerate() {
                    f(k, g);
                }
            }
        }
    }

    pub fn max_abs(&self) -> T {
        let rows = self.entity_rows.values().chain(self.relation_rows.values());
        rows.map(|r| r.as_slice())
            .chain(self.dense_parts())
            .flat_map(|s| s.iter())
            .fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// Reverse-mode pass over `tape`. `dlogits[t]` is the gradient of the scalar
/// loss with respect to step `t`'s logits; results are added to `grads`.
///
/// Panics if `dlogits` does not match the tape's shapes.
pub fn backward_into<T: Real>(
    params: &PolicyParams<T>,
    tape: &Tape<T>,
    dlogits: &[Vec<T>],
    grads: &mut Gradients<T>,
) {
    assert_eq!(dlogits.len(), tape.steps.len(), "one logit gradient per step");
    assert_eq!(params.dims, grads.dims, "gradient shape");
    let Dims { embed: d, hidden: h, ff: f, .. } = params.dims;
    let zero = T::zero();
    let one = T::one();
    let mut dh_next = vec![zero; h];
    let mut dc_next = vec![zero; h];

    for (step, dl) in tape.steps.iter().zip(dlogits).rev() {
        let dist = &step.distribution;
        assert_eq!(dl.len(), dist.actions.len(), "logit gradient length");

        // Action scores.
        let mut dz = vec![zero; 2 * d];
        for (a, &g) in dist.actions.iter().zip(dl) {
            if g == zero {
                continue;
            }
            axpy(g, params.relation_emb.row(a.relation.index()), &mut dz[..d]);
            axpy(g, params.entity_emb.row(a.entity.index()), &mut dz[d..]);
            axpy(g, &step.z[..d], grads.relation_row(a.relation));
            axpy(g, &step.z[d..], grads.entity_row(a.entity));
        }

        // Feedforward.
        grads.w2.outer_acc(&dz, &step.a1);
        axpy(one, &dz, &mut grads.b2);
        let mut dpre1 = vec![zero; f];
        params.w2.gemv_t_acc(&dz, &mut dpre1);
        for (g, &p) in dpre1.iter_mut().zip(&step.pre1) {
            if p <= zero {
                *g = zero;
            }
        }
        grads.w1.outer_acc(&dpre1, &step.u);
        axpy(one, &dpre1, &mut grads.b1);
        let mut du = vec![zero; h + d];
        params.w1.gemv_t_acc(&dpre1, &mut du);
        axpy(one, &du[h..], grads.relation_row(tape.query_relation));

        // LSTM cell.
        let g = &step.gates;
        let mut dgates = vec![zero; 4 * h];
        let mut dc_prev = vec![zero; h];
        for k in 0..h {
            let (i, fg, gc, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let dh = du[k] + dh_next[k];
            let tc = step.tanh_c[k];
            let dc = dc_next[k] + dh * o * (one - tc * tc);
            dgates[k] = dc * gc * i * (one - i);
            dgates[h + k] = dc * step.c_prev[k] * fg * (one - fg);
            dgates[2 * h + k] = dc * i * (one - gc * gc);
            dgates[3 * h + k] = dh * tc * o * (one - o);
            dc_prev[k] = dc * fg;
        }
        grads.lstm_wx.outer_acc(&dgates, &step.x);
        grads.lstm_wh.outer_acc(&dgates, &step.h_prev);
        axpy(one, &dgates, &mut grads.lstm_b);
        let mut dx = vec![zero; 2 * d];
        params.lstm_wx.gemv_t_acc(&dgates, &mut dx);
        axpy(one, &dx[..d], grads.relation_row(step.prev_relation));
        axpy(one, &dx[d..], grads.entity_row(step.entity));

        dh_next.iter_mut().for_each(|x| *x = zero);
        params.lstm_wh.gemv_t_acc(&dgates, &mut dh_next);
        dc_next = dc_prev;
    }
}

/// Convenience wrapper returning fresh gradients.
pub fn backward<T: Real>(params: &PolicyParams<T>, tape: &Tape<T>, dlogits: &[Vec<T>]) -> Gradients<T> {
    let mut grads = Gradients::zeros(params.dims);
    backward_into(params, tape, dlogits, &mut grads);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { entities: 5, relations: 7, embed: 8, hidden: 8, ff: 16 }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = PolicyParams::<f32>::init(dims(), 3).unwrap();
        let b = PolicyParams::<f32>::init(dims(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, PolicyParams::<f32>::init(dims(), 4).unwrap());
        let bound = xavier_bound(5, 8) as f32;
        assert!(a.entity_emb.as_slice().iter().all(|x| x.abs() <= bound));
        let bound = xavier_bound(32, 16) as f32;
        assert!(a.lstm_wx.as_slice().iter().all(|x| x.abs() <= bound));
        assert!(a.lstm_b[..8].iter().all(|&x| x == 0.0));
        assert!(a.lstm_b[8..16].iter().all(|&x| x == 1.0));
        assert!(a.b1.iter().chain(&a.b2).all(|&x| x == 0.0));
    }

    #[test]
    fn param_count_closed_form() {
        // 5*8 + 7*8 + 32*16 + 32*8 + 32 + 16*16 + 16 + 16*16 + 16
        let expected = 40 + 56 + 512 + 256 + 32 + 256 + 16 + 256 + 16;
        assert_eq!(dims().param_count(), expected);
        assert_eq!(PolicyParams::<f64>::init(dims(), 0).unwrap().param_count(), expected);
    }

    #[test]
    fn zero_dimension_rejected() {
        let bad = Dims { hidden: 0, ..dims() };
        assert_eq!(PolicyParams::<f32>::init(bad, 0), Err(PolicyError::ZeroDimension("hidden")));
    }

    fn zeroed() -> PolicyParams<f64> {
        let mut p = PolicyParams::<f64>::init(dims(), 1).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let p = zeroed();
        let s = lstm_step(&p, &HistoryState::zero(8), RelationId(0), EntityId(2));
        assert!(s.hidden.iter().all(|&x| x == 0.0));
        assert_eq!(s.step, 1);
    }

    #[test]
    fn identical_embeddings_identical_outputs() {
        let mut p = PolicyParams::<f64>::init(dims(), 9).unwrap();
        let row = p.entity_emb.row(1).to_vec();
        p.entity_emb.row_mut(3).copy_from_slice(&row);
        let h0 = HistoryState::zero(8);
        let a = lstm_step(&p, &h0, RelationId(2), EntityId(1));
        let b = lstm_step(&p, &h0, RelationId(2), EntityId(3));
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn equal_logits_are_uniform() {
        let p = zeroed();
        let acts: Vec<Action> = (0..4).map(|e| Action::new(RelationId(1), EntityId(e))).collect();
        let dist = score_actions(&p, &HistoryState::zero(8), RelationId(1), &acts);
        assert!(dist.probabilities.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!((dist.entropy() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = PolicyParams::<f64>::init(dims(), 5).unwrap();
        let mut tape = Tape::new(&p, RelationId(2));
        let acts = [Action::self_loop(EntityId(0)), Action::new(RelationId(1), EntityId(1))];
        tape.push(&p, RelationId(0), EntityId(0), &acts);
        tape.push(&p, RelationId(1), EntityId(1), &acts);
        let g = backward(&p, &tape, &[vec![0.0; 2], vec![0.0; 2]]);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let p = PolicyParams::<f64>::init(dims(), 5).unwrap();
        let mut tape = Tape::new(&p, RelationId(2));
        let acts = [Action::self_loop(EntityId(0)), Action::new(RelationId(1), EntityId(1))];
        tape.push(&p, RelationId(0), EntityId(0), &acts);
        let g = backward(&p, &tape, &[vec![0.3, -0.3]]);
        let ent = g.dense(0);
        for e in 2..5 {
            assert!(ent[e * 8..(e + 1) * 8].iter().all(|&x| x == 0.0));
        }
        assert_eq!(g.entity_rows.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        let rel = g.dense(1);
        for r in 3..7 {
            assert!(rel[r * 8..(r + 1) * 8].iter().all(|&x| x == 0.0));
        }
    }
}
