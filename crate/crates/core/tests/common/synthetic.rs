//! Synthetic benchmarks with a planted membership signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synprune_core::conventions::ConventionSet;
use synprune_core::evalharness::LabeledSample;
use synprune_core::pruner::{label_source, PruneMode};
use synprune_core::scoring::Label;
use synprune_core::tokenprob::TokenizedSample;

/// Replace the log-probabilities of a segmented source: pruned tokens get
/// `pruned(rng)`, retained ones `retained(rng)` (both as NLL).
fn assign(
    id: &str,
    source: &str,
    pieces: Vec<String>,
    set: &ConventionSet,
    rng: &mut ChaCha8Rng,
    mut nll: impl FnMut(bool, &mut ChaCha8Rng) -> f64,
) -> TokenizedSample {
    let mut sample = super::sample_from_pieces(id, pieces, rng);
    let lab = label_source(source, &sample.spans(), set, PruneMode::Eq4).unwrap();
    for (t, &l) in sample.tokens.iter_mut().zip(&lab.labels).skip(1) {
        t.logprob = Some(-nll(l == 0, rng));
    }
    sample
}

/// Members' retained tokens are 1 nat less likely than non-members';
/// pruned tokens follow one per-sample noisy distribution in both classes.
pub fn separation_corpus(per_class: usize, seed: u64) -> Vec<LabeledSample> {
    let corpus = super::load_corpus();
    let set = ConventionSet::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..2 * per_class {
        let label = if i % 2 == 0 { Label::Member } else { Label::NonMember };
        let (name, source) = &corpus[(i / 2) % corpus.len()];
        let pieces = super::bpe_segment(source, &mut rng);
        let level = rng.gen_range(0.0..10.0);
        let shift = if label == Label::Member { 1.0 } else { 0.0 };
        let sample = assign(
            &format!("{i:04}-{name}"),
            source,
            pieces,
            &set,
            &mut rng,
            |pruned, rng| {
                if pruned {
                    level * rng.gen_range(0.5..1.5)
                } else {
                    rng.gen_range(0.0..0.9) + shift
                }
            },
        );
        out.push(LabeledSample { sample, label });
    }
    out
}

/// Assignment-only snippets where only data-model conventions fire.
/// Retained tokens carry the membership signal; bracket and quote tokens
/// are pure noise.
pub fn data_model_corpus(per_class: usize, seed: u64) -> Vec<LabeledSample> {
    let shapes = [
        "x = [a, b]\n",
        "y = {k: v}\n",
        "s = 'text'\n",
        "t = (p, q)\n",
        "z = [1, 2, 3]\nw = {\"a\": z}\n",
        "v = m[i]\n",
    ];
    let set = ConventionSet::shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..2 * per_class {
        let label = if i % 2 == 0 { Label::Member } else { Label::NonMember };
        let source = shapes[(i / 2) % shapes.len()];
        let pieces = super::bpe_segment(source, &mut rng);
        let shift = if label == Label::Member { 1.0 } else { 0.0 };
        let sample = assign(&format!("dm{i}"), source, pieces, &set, &mut rng, |pruned, rng| {
            if pruned {
                rng.gen_range(0.0..12.0)
            } else {
                rng.gen_range(0.0..0.9) + shift
            }
        });
        out.push(LabeledSample { sample, label });
    }
    out
}
