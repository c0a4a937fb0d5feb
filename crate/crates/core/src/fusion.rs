//! Integration layer: a one-hidden-layer network mapping the visual and
//! contextual probability vectors of a superpixel to its final class
//! distribution, trained by the genetic algorithm.

use crate::context::fuse_context;
use crate::error::{Error, Result};
use crate::ganet::{self, GaConfig, GenStats};
use crate::prob::ClassProbVector;
use crate::scalar::{sigmoid, Real};

/// How the network consumes the context votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextInput {
    /// Visual, local, and global vectors concatenated (input width 3M).
    Separate,
    /// Visual concatenated with the fused context vector (input width 2M);
    /// ablation mode.
    Fused,
}

impl ContextInput {
    pub fn input_dim(self, class_count: usize) -> usize {
        match self {
            ContextInput::Separate => 3 * class_count,
            ContextInput::Fused => 2 * class_count,
        }
    }
}

/// Genome length for a network of the given shape: input weights, hidden
/// biases, output weights, output biases.
pub fn genome_len(class_count: usize, hidden: usize, input: ContextInput) -> usize {
    let d = input.input_dim(class_count);
    d * hidden + hidden + hidden * class_count + class_count
}

/// Sigmoid-hidden, softmax-output fusion network. Input columns partition
/// into contiguous blocks: visual weights first, then the context block(s).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationNet<T: Real> {
    class_count: usize,
    hidden: usize,
    input: ContextInput,
    /// Input-to-hidden weights, row-major over input dims.
    w1: Vec<T>,
    b1: Vec<T>,
    /// Hidden-to-output weights, row-major over hidden units.
    w2: Vec<T>,
    b2: Vec<T>,
}

impl<T: Real> IntegrationNet<T> {
    pub fn from_parts(
        class_count: usize,
        hidden: usize,
        input: ContextInput,
        w1: Vec<T>,
        b1: Vec<T>,
        w2: Vec<T>,
        b2: Vec<T>,
    ) -> Result<Self> {
        if class_count == 0 || hidden == 0 {
            return Err(Error::invalid("class count and hidden size must be at least 1"));
        }
        let d = input.input_dim(class_count);
        if w1.len() != d * hidden
            || b1.len() != hidden
            || w2.len() != hidden * class_count
            || b2.len() != class_count
        {
            return Err(Error::invalid("integration net shapes are inconsistent"));
        }
        if !w1
            .iter()
            .chain(&b1)
            .chain(&w2)
            .chain(&b2)
            .all(|w| w.is_finite())
        {
            return Err(Error::invalid("integration net weights must be finite"));
        }
        Ok(Self {
            class_count,
            hidden,
            input,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> ContextInput {
        self.input
    }

    pub fn weights(&self) -> (&[T], &[T], &[T], &[T]) {
        (&self.w1, &self.b1, &self.w2, &self.b2)
    }

    /// Flattens the weights in the fixed order: input weights (row-major),
    /// hidden biases, output weights (row-major), output biases.
    pub fn pack_genome(&self) -> Vec<T> {
        let mut g =
            Vec::with_capacity(genome_len(self.class_count, self.hidden, self.input));
        g.extend_from_slice(&self.w1);
        g.extend_from_slice(&self.b1);
        g.extend_from_slice(&self.w2);
        g.extend_from_slice(&self.b2);
        g
    }

    /// Inverse of [`pack_genome`].
    pub fn unpack_genome(
        genome: &[T],
        class_count: usize,
        hidden: usize,
        input: ContextInput,
    ) -> Result<Self> {
        let want = genome_len(class_count, hidden, input);
        if genome.len() != want {
            return Err(Error::invalid(format!(
                "genome has {} genes, shape needs {want}",
                genome.len()
            )));
        }
        let d = input.input_dim(class_count);
        let (w1, rest) = genome.split_at(d * hidden);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(hidden * class_count);
        Self::from_parts(
            class_count,
            hidden,
            input,
            w1.to_vec(),
            b1.to_vec(),
            w2.to_vec(),
            b2.to_vec(),
        )
    }

    fn assemble_input(
        &self,
        visual: &ClassProbVector<T>,
        local: &ClassProbVector<T>,
        global: &ClassProbVector<T>,
    ) -> Result<Vec<T>> {
        let m = self.class_count;
        if visual.len() != m || local.len() != m || global.len() != m {
            return Err(Error::invalid(format!(
                "probability vectors must all have length {m}"
            )));
        }
        let mut x = Vec::with_capacity(self.input.input_dim(m));
        x.extend_from_slice(visual.as_slice());
        match self.input {
            ContextInput::Separate => {
                x.extend_from_slice(local.as_slice());
                x.extend_from_slice(global.as_slice());
            }
            ContextInput::Fused => {
                x.extend_from_slice(fuse_context(local, global)?.as_slice());
            }
        }
        Ok(x)
    }

    /// Forward pass: affine + sigmoid hidden layer, affine + softmax output.
    pub fn forward(
        &self,
        visual: &ClassProbVector<T>,
        local: &ClassProbVector<T>,
        global: &ClassProbVector<T>,
    ) -> Result<ClassProbVector<T>> {
        let x = self.assemble_input(visual, local, global)?;
        let h: Vec<T> = (0..self.hidden)
            .map(|j| {
                let mut a = self.b1[j];
                for (d, &xd) in x.iter().enumerate() {
                    a = a + self.w1[d * self.hidden + j] * xd;
                }
                sigmoid(a)
            })
            .collect();
        let mut z: Vec<T> = (0..self.class_count)
            .map(|i| {
                let mut v = self.b2[i];
                for (j, &hj) in h.iter().enumerate() {
                    v = v + self.w2[j * self.class_count + i] * hj;
                }
                v
            })
            .collect();
        // Stable softmax; subtracting the max also makes the output exactly
        // invariant to a constant shift of the output biases.
        let zmax = z.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in z.iter_mut() {
            *v = (*v - zmax).exp();
            total += *v;
        }
        ClassProbVector::new(z.iter().map(|&v| v / total).collect())
    }
}

/// The three per-superpixel probability vectors consumed by the net.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTriple<T: Real> {
    pub visual: ClassProbVector<T>,
    pub local: ClassProbVector<T>,
    pub global: ClassProbVector<T>,
}

/// One GA training sample: the probability triple, the ground-truth class,
/// and the superpixel's pixel count (its weight in the fitness).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample<T: Real> {
    pub probs: ProbTriple<T>,
    pub truth: u8,
    pub pixel_count: u64,
}

/// Pixel-count-weighted argmax accuracy of `net` over `samples`, the GA
/// fitness ("recognition accuracy"). Integer-weighted sums keep it exact
/// and order-independent.
pub fn weighted_accuracy<T: Real>(net: &IntegrationNet<T>, samples: &[FusionSample<T>]) -> f64 {
    let mut correct = 0u64;
    let mut total = 0u64;
    for s in samples {
        total += s.pixel_count;
        let p = net
            .forward(&s.probs.visual, &s.probs.local, &s.probs.global)
            .expect("sample shapes validated before training");
        if p.argmax() == s.truth as usize {
            correct += s.pixel_count;
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Trains the integration net with the GA; fitness is
/// [`weighted_accuracy`]. Returns the best net and the GA history.
pub fn train_integration<T: Real>(
    samples: &[FusionSample<T>],
    class_count: usize,
    hidden: usize,
    input: ContextInput,
    ga: &GaConfig,
) -> Result<(IntegrationNet<T>, Vec<GenStats>)> {
    if samples.is_empty() {
        return Err(Error::invalid("empty integration training set"));
    }
    if class_count == 0 || hidden == 0 {
        return Err(Error::invalid("class count and hidden size must be at least 1"));
    }
    for s in samples {
        if (s.truth as usize) >= class_count {
            return Err(Error::invalid(format!("sample truth {} out of range", s.truth)));
        }
        if s.probs.visual.len() != class_count
            || s.probs.local.len() != class_count
            || s.probs.global.len() != class_count
        {
            return Err(Error::invalid("sample probability vectors have wrong length"));
        }
    }
    let glen = genome_len(class_count, hidden, input);
    let fitness = |genome: &[T]| -> f64 {
        let net = IntegrationNet::unpack_genome(genome, class_count, hidden, input)
            .expect("genome length fixed by the GA");
        weighted_accuracy(&net, samples)
    };
    let (best, history) = ganet::run(ga, glen, fitness)?;
    let net = IntegrationNet::unpack_genome(&best.genome, class_count, hidden, input)?;
    Ok((net, history))
}

/// Final labels: forward-pass argmax per superpixel, ties to the lowest
/// class index.
pub fn predict_final<T: Real>(
    net: &IntegrationNet<T>,
    triples: &[ProbTriple<T>],
) -> Result<Vec<u8>> {
    triples
        .iter()
        .map(|t| {
            net.forward(&t.visual, &t.local, &t.global)
                .map(|p| p.argmax() as u8)
        })
        .collect()
}

/// A hand-built net that reproduces the visual argmax exactly: the hidden
/// layer passes each visual probability through a strictly increasing map
/// and the output layer reads it back, so ordering (and the lowest-index
/// tie rule) is preserved. Used as a baseline in tests and diagnostics.
pub fn pass_through_visual<T: Real>(class_count: usize) -> Result<IntegrationNet<T>> {
    let m = class_count;
    let d = ContextInput::Separate.input_dim(m);
    let gain = T::of(8.0);
    let mut w1 = vec![T::zero(); d * m];
    for i in 0..m {
        // Input column i (visual block) feeds hidden unit i only.
        w1[i * m + i] = gain;
    }
    let mut w2 = vec![T::zero(); m * m];
    for i in 0..m {
        w2[i * m + i] = gain;
    }
    IntegrationNet::from_parts(
        m,
        m,
        ContextInput::Separate,
        w1,
        vec![T::zero(); m],
        w2,
        vec![T::zero(); m],
    )
}
