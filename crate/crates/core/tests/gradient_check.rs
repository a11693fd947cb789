//! Central finite differences against the hand-written backward pass on
//! a full rollout loss mixing the supervised and policy-gradient terms.

use rand::Rng;
use ssrl_core::kg::{KnowledgeGraph, MaskPolicy};
use ssrl_core::objective::{label_cross_entropy, label_loss_grad, policy_gradient_grad};
use ssrl_core::policy::{backward, Dims, PolicyParams, Tape};
use ssrl_core::rng::stream;
use ssrl_core::synth::{random_triples, SynthGraph};
use ssrl_core::{Action, EntityId, Query, RelationId, NO_OP};

const H: f64 = 1e-5;
const BETA_SL: f64 = 0.02;
const BETA_RL: f64 = 0.05;

/// One fixed trajectory: per step the previous relation, the entity, its
/// action list, labels, the chosen action and its advantage.
struct Step {
    prev: RelationId,
    entity: EntityId,
    actions: Vec<Action>,
    labels: Vec<bool>,
    chosen: usize,
    advantage: f64,
}

struct Case {
    params: PolicyParams<f64>,
    query_rel: RelationId,
    steps: Vec<Step>,
}

/// A random case in which every step has a real choice (2 to 5 actions).
fn build_case(seed: u64) -> Case {
    (0..).find_map(|attempt| try_case(seed, attempt)).unwrap()
}

fn try_case(seed: u64, attempt: u64) -> Option<Case> {
    let mut rng = stream(seed, &[77, attempt]);
    let triples = random_triples(8, 3, 2, seed * 1000 + attempt);
    if triples.is_empty() {
        return None;
    }
    let graph = KnowledgeGraph::ingest(&SynthGraph::tsv(&triples), None, 5).unwrap();
    let query = Query::from(graph.triples()[rng.gen_range(0..graph.triples().len())]);
    let view = graph.query_view(&query, MaskPolicy::QueryEdge);
    let dims = Dims { entities: graph.entity_count(), relations: graph.relation_count(), embed: 8, hidden: 8, ff: 8 };
    let mut params = PolicyParams::<f64>::init(dims, seed).unwrap();
    // non-zero biases so their gradients are exercised away from zero
    for t in [&mut params.lstm_b, &mut params.b1, &mut params.b2] {
        t.iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
    }
    let mut steps = Vec::new();
    let (mut prev, mut cur) = (NO_OP, query.source);
    for _ in 0..3 {
        let actions = view.actions(cur).into_owned();
        if actions.len() < 2 {
            return None;
        }
        assert!(actions.len() <= 5);
        let chosen = rng.gen_range(0..actions.len());
        let labels = (0..actions.len()).map(|_| rng.gen_bool(0.4)).collect();
        steps.push(Step { prev, entity: cur, actions: actions.clone(), labels, chosen, advantage: rng.gen_range(-1.0..1.0) });
        prev = actions[chosen].relation;
        cur = actions[chosen].entity;
    }
    Some(Case { params, query_rel: query.relation, steps })
}

fn loss(case: &Case, params: &PolicyParams<f64>) -> f64 {
    let mut tape = Tape::new(params, case.query_rel);
    let mut total = 0.0;
    for s in &case.steps {
        let d = tape.push(params, s.prev, s.entity, &s.actions);
        let h = d.entropy();
        total += label_cross_entropy(&d.probabilities, &s.labels) - BETA_SL * h;
        total += -s.advantage * d.log_probabilities[s.chosen] - BETA_RL * h;
    }
    total
}

/// Largest relative error over every parameter of one case.
fn max_relative_error(case: &Case) -> f64 {
    let mut tape = Tape::new(&case.params, case.query_rel);
    let mut dlogits = Vec::new();
    for s in &case.steps {
        let d = tape.push(&case.params, s.prev, s.entity, &s.actions);
        let (_, mut g) = label_loss_grad(d, &s.labels, BETA_SL);
        let pg = policy_gradient_grad(d, s.chosen, s.advantage, BETA_RL);
        g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
        dlogits.push(g);
    }
    let grads = backward(&case.params, &tape, &dlogits);
    let mut worst: f64 = 0.0;
    let mut p = case.params.clone();
    for ti in 0..9 {
        let analytic = grads.dense(ti);
        for k in 0..analytic.len() {
            let orig = p.tensors()[ti][k];
            p.tensors_mut()[ti][k] = orig + H;
            let up = loss(case, &p);
            p.tensors_mut()[ti][k] = orig - H;
            let down = loss(case, &p);
            p.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[k];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn full_model_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let e = max_relative_error(&build_case(seed));
        worst = worst.max(e);
    }
    eprintln!("max relative error {worst:e}");
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn descent_step_lowers_loss() {
    let case = build_case(3);
    let mut tape = Tape::new(&case.params, case.query_rel);
    let mut dlogits = Vec::new();
    for s in &case.steps {
        let d = tape.push(&case.params, s.prev, s.entity, &s.actions);
        let (_, mut g) = label_loss_grad(d, &s.labels, BETA_SL);
        let pg = policy_gradient_grad(d, s.chosen, s.advantage, BETA_RL);
        g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
        dlogits.push(g);
    }
    let grads = backward(&case.params, &tape, &dlogits);
    let mut p = case.params.clone();
    let mut sq = 0.0;
    for ti in 0..9 {
        let g = grads.dense(ti);
        for (x, gk) in p.tensors_mut()[ti].iter_mut().zip(&g) {
            *x -= 1e-4 * gk;
            sq += gk * gk;
        }
    }
    let before = loss(&case, &case.params);
    let after = loss(&case, &p);
    // first-order prediction of the decrease
    let predicted = 1e-4 * sq;
    assert!(after < before);
    assert!(((before - after) - predicted).abs() < 0.05 * predicted);
}
