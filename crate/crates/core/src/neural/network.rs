use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::layers::{axpy, softmax_in_place, Activation, Mlp, WeightDocument};
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, ProbTable};

/// Feed-forward classifier mapping a single measurement outcome to a
/// probability vector over the grid classes, `P_NN(φ_j | d)`.
///
/// One input node carries the outcome label rescaled to `[0, 1]`; hidden
/// layers use rectifiers and the output layer a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorNetwork {
    mlp: Mlp,
    outcomes: usize,
}

/// Training shots sharing one outcome: the class label of each shot.
#[derive(Clone, Debug, Default)]
pub struct ShotGroup {
    pub outcome: usize,
    pub classes: Vec<u32>,
}

impl PosteriorNetwork {
    pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

    /// He-normal initialisation (variance `2/n_prev`), zero biases.
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], classes: usize, outcomes: usize, rng: &mut R) -> Result<Self> {
        if outcomes < 2 {
            return Err(Error::Shape("a classifier needs at least two outcomes".into()));
        }
        let mut sizes = vec![1];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(Activation::Softmax);
        let mut mlp = Mlp::zeros(sizes, activations)?;
        for l in 0..mlp.layer_count() {
            let fan_in = mlp.sizes()[l];
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive variance");
            let (w, _) = mlp.layer_mut(l);
            w.iter_mut().for_each(|x| *x = normal.sample(rng));
        }
        Ok(Self { mlp, outcomes })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn classes(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    fn check_outcome(&self, outcome: usize) -> Result<()> {
        if outcome >= self.outcomes {
            return Err(Error::InvalidOutcome {
                outcome,
                outcomes: self.outcomes,
            });
        }
        Ok(())
    }

    pub fn encode(&self, outcome: usize) -> f64 {
        outcome as f64 / (self.outcomes - 1) as f64
    }

    /// Hidden activations (input first) and output logits.
    fn hidden_and_logits(&self, outcome: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let last = self.mlp.layer_count() - 1;
        let mut trace = vec![vec![self.encode(outcome)]];
        for l in 0..last {
            let mut z = self.mlp.affine(l, trace.last().unwrap());
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            trace.push(z);
        }
        let logits = self.mlp.affine(last, trace.last().unwrap());
        (trace, logits)
    }

    /// Class probabilities for one outcome.
    pub fn forward(&self, outcome: usize) -> Result<Vec<f64>> {
        self.check_outcome(outcome)?;
        let (_, mut logits) = self.hidden_and_logits(outcome);
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// `-log softmax(logits)` per class.
    fn neg_log_probs(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        logits.iter().map(|z| lse - z).collect()
    }

    /// Mean categorical cross-entropy over the shots in `groups`.
    pub fn loss(&self, groups: &[ShotGroup]) -> Result<f64> {
        let total: usize = groups.iter().map(|g| g.classes.len()).sum();
        let mut loss = 0.0;
        for g in groups.iter().filter(|g| !g.classes.is_empty()) {
            self.check_outcome(g.outcome)?;
            let (_, logits) = self.hidden_and_logits(g.outcome);
            let nll = Self::neg_log_probs(&logits);
            loss += g.classes.iter().map(|&c| nll[c as usize]).sum::<f64>();
        }
        Ok(loss / total.max(1) as f64)
    }

    /// Mean cross-entropy and its gradient with respect to every parameter
    /// (written into `grad`, laid out like [`Mlp::params`]).
    ///
    /// Shots with the same outcome share one input, so each group needs a
    /// single forward and backward pass: the summed logit gradient of a group
    /// with `n` shots is `n·softmax − counts`.
    pub fn loss_and_gradient(&self, groups: &[ShotGroup], grad: &mut [f64]) -> Result<f64> {
        if grad.len() != self.mlp.params().len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let total: usize = groups.iter().map(|g| g.classes.len()).sum();
        if total == 0 {
            return Ok(0.0);
        }
        let scale = 1.0 / total as f64;
        let layers = self.mlp.layer_count();
        let sizes = self.mlp.sizes().to_vec();
        let offsets: Vec<usize> = (0..layers).map(|l| self.mlp.layer_offset(l)).collect();
        let mut loss = 0.0;

        for g in groups.iter().filter(|g| !g.classes.is_empty()) {
            self.check_outcome(g.outcome)?;
            let (trace, logits) = self.hidden_and_logits(g.outcome);
            let nll = Self::neg_log_probs(&logits);
            let n = g.classes.len() as f64;
            let mut delta: Vec<f64> = nll.iter().map(|v| n * (-v).exp() * scale).collect();
            for &c in &g.classes {
                loss += nll[c as usize];
                delta[c as usize] -= scale;
            }

            for l in (0..layers).rev() {
                let (n_in, n_out) = (sizes[l], sizes[l + 1]);
                let input = &trace[l];
                let (w, _) = self.mlp.layer(l);
                let (gw, gb) = grad[offsets[l]..offsets[l] + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (j, &dj) in delta.iter().enumerate() {
                    if dj != 0.0 {
                        axpy(dj, input, &mut gw[j * n_in..(j + 1) * n_in]);
                        gb[j] += dj;
                    }
                }
                if l > 0 {
                    let mut back = vec![0.0; n_in];
                    for (j, &dj) in delta.iter().enumerate() {
                        if dj != 0.0 {
                            axpy(dj, &w[j * n_in..(j + 1) * n_in], &mut back);
                        }
                    }
                    // Rectifier derivative: pass where the activation is positive.
                    for (b, &a) in back.iter_mut().zip(input) {
                        if a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        Ok(loss * scale)
    }

    /// Cross-entropy of the whole dataset given per-outcome class counts
    /// (`counts[d][j]`).
    pub fn dataset_loss(&self, counts_by_outcome: &[Vec<u64>]) -> f64 {
        let mut loss = 0.0;
        let mut total = 0u64;
        for (d, counts) in counts_by_outcome.iter().enumerate() {
            let n: u64 = counts.iter().sum();
            if n == 0 {
                continue;
            }
            let (_, logits) = self.hidden_and_logits(d);
            let nll = Self::neg_log_probs(&logits);
            loss += counts
                .iter()
                .zip(&nll)
                .map(|(&c, v)| if c > 0 { c as f64 * v } else { 0.0 })
                .sum::<f64>();
            total += n;
        }
        loss / total.max(1) as f64
    }

    pub fn to_document(&self, grid: Option<&ParameterGrid>) -> WeightDocument {
        let mut meta = json!({ "outcomes": self.outcomes });
        if let Some(grid) = grid {
            meta["grid"] = serde_json::to_value(grid).expect("grid serialises");
        }
        self.mlp.to_document("posterior", Some(meta))
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self> {
        if doc.kind != "posterior" {
            return Err(Error::Config(format!("expected a posterior network, found {:?}", doc.kind)));
        }
        let outcomes = doc
            .metadata
            .as_ref()
            .and_then(|m| m.get("outcomes"))
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config("posterior network metadata lacks the outcome count".into()))?
            as usize;
        let mlp = Mlp::from_document(doc)?;
        if mlp.input_size() != 1 {
            return Err(Error::Shape("posterior network must have a single input node".into()));
        }
        Ok(Self { mlp, outcomes })
    }
}

/// `table[d][j] = forward(net, d)[j]` for every outcome.
pub fn posterior_table(net: &PosteriorNetwork, grid: &ParameterGrid, outcomes: usize) -> Result<ProbTable> {
    if net.classes() != grid.len() {
        return Err(Error::Shape(format!(
            "network has {} classes but the grid has {} points",
            net.classes(),
            grid.len()
        )));
    }
    if outcomes != net.outcomes() {
        return Err(Error::Shape(format!(
            "network was trained on {} outcomes, table asks for {outcomes}",
            net.outcomes()
        )));
    }
    let mut values = Vec::with_capacity(outcomes * grid.len());
    for d in 0..outcomes {
        values.extend(net.forward(d)?);
    }
    ProbTable::new(grid.clone(), outcomes, values)
}
