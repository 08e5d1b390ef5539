use std::collections::BTreeMap;

use ndarray::{aview1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Triple;
use crate::model::Model;
use crate::params::Parameters;
use crate::text::{EntityInput, TokenSeq};

use super::LossKind;

/// Entities whose encoder backward passes share one gradient buffer.
const BACKWARD_CHUNK: usize = 32;

/// Loss of one mini-batch and, on request, its gradient.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grads: Option<Model>,
    /// TransE L2 scores evaluated at an exact translation.
    pub degenerate: usize,
}

/// Mean over positives of the loss averaged over that positive's negatives,
/// plus `l2` times the squared norm of the relation table and the encoder
/// output layer.
///
/// `inputs` holds the token sequence of every entity, indexed by id. Each
/// distinct entity of the batch is encoded once.
pub fn batch_objective(
    model: &Model,
    inputs: &[TokenSeq],
    positives: &[Triple],
    negatives: &[Vec<Triple>],
    loss: LossKind,
    l2: f64,
    with_grad: bool,
) -> Result<Objective> {
    if positives.is_empty() || positives.len() != negatives.len() {
        return Err(Error::Contract(format!(
            "{} positives with {} negative lists",
            positives.len(),
            negatives.len()
        )));
    }
    let mut slot = BTreeMap::new();
    for t in positives.iter().chain(negatives.iter().flatten()) {
        for e in [t.head, t.tail] {
            let n = slot.len();
            slot.entry(e).or_insert(n);
        }
    }
    let mut order = vec![0; slot.len()];
    for (&e, &s) in &slot {
        order[s] = e;
    }
    let input = |e: usize| -> Result<EntityInput<'_>> {
        let tokens = inputs
            .get(e)
            .ok_or_else(|| Error::Contract(format!("no token sequence for entity {e}")))?;
        Ok(EntityInput { entity: e, tokens })
    };

    let forward: Vec<_> = order
        .par_iter()
        .map(|&e| model.encoder.forward(&input(e)?))
        .collect::<Result<_>>()?;
    let d = model.dim();
    let mut emb = Array2::zeros((order.len(), d));
    for (s, (enc, _)) in forward.iter().enumerate() {
        emb.row_mut(s).assign(&enc.vector);
    }
    let row = |e: usize| emb.row(slot[&e]).to_slice().expect("contiguous").to_vec();

    let mut d_emb = Array2::<f64>::zeros(emb.raw_dim());
    let mut grads = with_grad.then(|| model.zeros_like());
    let mut data_loss = 0.0;
    let mut degenerate = 0;
    let (mut dh, mut dr, mut dt) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut push =
        |t: &Triple, scale: f64, d_emb: &mut Array2<f64>, grads: &mut Option<Model>| -> bool {
            let Some(g) = grads.as_mut() else {
                return false;
            };
            let (h, tl) = (row(t.head), row(t.tail));
            let r = model.relation(t.relation);
            dh.fill(0.0);
            dr.fill(0.0);
            dt.fill(0.0);
            let deg = model.scoring.accumulate_gradient(
                &h,
                r.as_slice().expect("contiguous"),
                &tl,
                scale,
                &mut dh,
                &mut dr,
                &mut dt,
            );
            let mut gr = g.relations.row_mut(t.relation);
            gr += &aview1(&dr);
            let mut gh = d_emb.row_mut(slot[&t.head]);
            gh += &aview1(&dh);
            let mut gt = d_emb.row_mut(slot[&t.tail]);
            gt += &aview1(&dt);
            deg
        };

    let b = positives.len() as f64;
    for (pos, negs) in positives.iter().zip(negatives) {
        if negs.is_empty() {
            return Err(Error::Contract("positive without negatives".into()));
        }
        let k = negs.len() as f64;
        let sp = model.scoring.score_unchecked(
            &row(pos.head),
            model.relation(pos.relation).as_slice().expect("contiguous"),
            &row(pos.tail),
        );
        let mut dsp_total = 0.0;
        for neg in negs {
            let sn = model.scoring.score_unchecked(
                &row(neg.head),
                model.relation(neg.relation).as_slice().expect("contiguous"),
                &row(neg.tail),
            );
            let (l, dsp, dsn) = loss.value_and_grad(sp, sn);
            data_loss += l / (k * b);
            dsp_total += dsp;
            if dsn != 0.0 && push(neg, dsn / (k * b), &mut d_emb, &mut grads) {
                degenerate += 1;
            }
        }
        if dsp_total != 0.0 && push(pos, dsp_total / (k * b), &mut d_emb, &mut grads) {
            degenerate += 1;
        }
    }

    let reg_sq: f64 = model.relations.iter().map(|v| v * v).sum::<f64>()
        + model
            .encoder
            .regularized()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>();
    let total = data_loss + l2 * reg_sq;

    if let Some(g) = grads.as_mut() {
        let slots: Vec<usize> = (0..order.len()).collect();
        let partials: Vec<_> = slots
            .par_chunks(BACKWARD_CHUNK)
            .map(|chunk| {
                let mut part = model.encoder.zeros_like();
                for &s in chunk {
                    let up = d_emb.row(s).to_owned();
                    if up.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let e = order[s];
                    let inp = EntityInput {
                        entity: e,
                        tokens: &inputs[e],
                    };
                    model.encoder.backward(&inp, &forward[s].1, &up, &mut part);
                }
                part
            })
            .collect();
        for p in &partials {
            g.encoder.add_scaled(p, 1.0);
        }
        if l2 != 0.0 {
            g.relations.scaled_add(2.0 * l2, &model.relations);
            let src = model.encoder.regularized();
            for (dst, w) in g.encoder.regularized_mut().into_iter().zip(src) {
                for (x, v) in dst.iter_mut().zip(w) {
                    *x += 2.0 * l2 * v;
                }
            }
        }
    }
    Ok(Objective {
        loss: total,
        grads,
        degenerate,
    })
}
