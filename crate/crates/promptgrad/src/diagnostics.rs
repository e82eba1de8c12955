//! Analyses of optimized prompts and their generations.
//!
//! Three probes: nearest-token anchoring of each optimized embedding row
//! (softmax over inner products with the whole vocabulary), per-trace
//! entropy with repetition-loop detection, and a linear activation probe
//! that contrasts hidden states under two stimulus sets and projects both
//! prompt conditions onto the resulting per-layer directions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::PromptEmbedding;
use crate::error::{Error, Result};
use crate::inference::{argmax_lowest, GenerationTrace};
use crate::model::ModelCheckpoint;
use crate::scalar::Scalar;
use crate::tensor::{softmax_rows, Tensor2};

// ── Semantic anchoring ───────────────────────────────────────────────

/// Nearest-token report for one prompt position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorPosition {
    pub position: usize,
    pub original_token: usize,
    pub original_symbol: String,
    /// Token nearest to the optimized row under the softmax similarity.
    pub nearest_token: usize,
    pub nearest_symbol: String,
    pub p_nearest: f64,
    pub p_original: f64,
    /// Top five (token id, symbol, probability), highest first.
    pub top5: Vec<(usize, String, f64)>,
    pub anchored: bool,
}

/// Anchoring table over all prompt positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorReport {
    pub positions: Vec<AnchorPosition>,
    /// True when every position's nearest token is its original token.
    pub fully_anchored: bool,
    pub min_p_original: f64,
}

/// Similarity of each optimized row to the whole vocabulary: softmax over
/// the inner products with every embedding row, nearest match reported.
pub fn anchor_report<T: Scalar>(
    p: &PromptEmbedding<T>,
    ckpt: &ModelCheckpoint<T>,
) -> Result<AnchorReport> {
    p.check_compatible(ckpt)?;
    let vocab = ckpt.vocabulary();
    let emb = ckpt.embedding();
    let scores = crate::tensor::matmul_nt(p.matrix(), emb)?;
    let probs = softmax_rows(&scores);

    let mut positions = Vec::with_capacity(p.len());
    let mut fully = true;
    let mut min_p_orig = f64::INFINITY;
    for (r, &orig) in p.tokens().iter().enumerate() {
        let row = probs.row(r);
        let nearest = argmax_lowest(row);
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let top5 = order
            .iter()
            .take(5)
            .map(|&i| Ok((i, vocab.token(i)?.to_string(), row[i].as_f64())))
            .collect::<Result<Vec<_>>>()?;
        let p_original = row[orig].as_f64();
        min_p_orig = min_p_orig.min(p_original);
        let anchored = nearest == orig;
        fully &= anchored;
        positions.push(AnchorPosition {
            position: r,
            original_token: orig,
            original_symbol: vocab.token(orig)?.to_string(),
            nearest_token: nearest,
            nearest_symbol: vocab.token(nearest)?.to_string(),
            p_nearest: row[nearest].as_f64(),
            p_original,
            top5,
            anchored,
        });
    }
    Ok(AnchorReport {
        positions,
        fully_anchored: fully,
        min_p_original: min_p_orig,
    })
}

impl AnchorReport {
    /// Aligned-column rendering for terminal display.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:<10} {:<10} {:>10} {:>10}  anchored",
            "pos", "original", "nearest", "p_nearest", "p_original"
        );
        for p in &self.positions {
            let _ = writeln!(
                out,
                "{:>4}  {:<10} {:<10} {:>10.6} {:>10.6}  {}",
                p.position,
                p.original_symbol,
                p.nearest_symbol,
                p.p_nearest,
                p.p_original,
                if p.anchored { "yes" } else { "NO" }
            );
        }
        let _ = writeln!(
            out,
            "fully anchored: {}; min p_original: {:.6}",
            self.fully_anchored, self.min_p_original
        );
        out
    }
}

// ── Trajectory entropy ───────────────────────────────────────────────

/// Entropy summary of one generation trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Shannon entropy in bits per generation step.
    pub step_entropies: Vec<f64>,
    /// Mean of the per-step entropies.
    pub trajectory_entropy: f64,
    /// Smallest repeating tail period, when one was detected.
    pub repetition: Option<RepetitionLoop>,
}

/// A detected repetition loop at the end of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionLoop {
    pub period: usize,
    pub ngram: Vec<usize>,
    pub repeats: usize,
}

/// Default cap on the repetition period searched for.
pub const REPETITION_MAX_PERIOD: usize = 8;
/// Default number of consecutive tail repeats that counts as a loop.
pub const REPETITION_MIN_REPEATS: usize = 3;

/// Shannon entropy in bits of one probability row, with `0 log 0 = 0`.
fn entropy_bits<T: Scalar>(row: &[T]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        let p = p.as_f64();
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Mean per-step entropy of a trace plus repetition detection with the
/// default thresholds. Errors on an empty trace.
pub fn trajectory_entropy<T: Scalar>(trace: &GenerationTrace<T>) -> Result<EntropyReport> {
    if trace.is_empty() {
        return Err(Error::Usage(
            "trajectory entropy needs at least one step".to_string(),
        ));
    }
    let step_entropies: Vec<f64> = (0..trace.distributions.rows())
        .map(|r| entropy_bits(trace.distributions.row(r)))
        .collect();
    let trajectory = step_entropies.iter().sum::<f64>() / step_entropies.len() as f64;
    Ok(EntropyReport {
        trajectory_entropy: trajectory,
        repetition: detect_repetition(trace, REPETITION_MAX_PERIOD, REPETITION_MIN_REPEATS),
        step_entropies,
    })
}

/// Finds the smallest period `1..=max_period` whose final n-gram repeats
/// at least `min_repeats` times consecutively at the tail of the trace.
pub fn detect_repetition<T: Scalar>(
    trace: &GenerationTrace<T>,
    max_period: usize,
    min_repeats: usize,
) -> Option<RepetitionLoop> {
    detect_repetition_tokens(&trace.tokens, max_period, min_repeats)
}

/// Token-sequence form of [`detect_repetition`].
pub fn detect_repetition_tokens(
    tokens: &[usize],
    max_period: usize,
    min_repeats: usize,
) -> Option<RepetitionLoop> {
    let t = tokens.len();
    if min_repeats < 2 {
        return None;
    }
    for period in 1..=max_period.min(t / 2) {
        if period * min_repeats > t {
            break;
        }
        let tail = &tokens[t - period..];
        let mut repeats = 1;
        while repeats * period + period <= t
            && tokens[t - (repeats + 1) * period..t - repeats * period] == *tail
        {
            repeats += 1;
        }
        if repeats >= min_repeats {
            return Some(RepetitionLoop {
                period,
                ngram: tail.to_vec(),
                repeats,
            });
        }
    }
    None
}

impl EntropyReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>5}  {:>12}", "step", "entropy_bits");
        for (i, h) in self.step_entropies.iter().enumerate() {
            let _ = writeln!(out, "{:>5}  {:>12.6}", i, h);
        }
        let _ = writeln!(
            out,
            "trajectory entropy: {:.6} bits over {} steps",
            self.trajectory_entropy,
            self.step_entropies.len()
        );
        match &self.repetition {
            Some(rep) => {
                let _ = writeln!(
                    out,
                    "repetition loop: period {} x{} (tokens {:?})",
                    rep.period, rep.repeats, rep.ngram
                );
            }
            None => {
                let _ = writeln!(out, "repetition loop: none");
            }
        }
        out
    }
}

// ── LAT activation probing ───────────────────────────────────────────

/// Per-layer unit directions derived from contrasting stimulus sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeDirections {
    /// One unit vector (length d) per hidden layer, L+1 in total. A zero
    /// vector marks a layer where the contrast vanished.
    pub directions: Vec<Vec<f64>>,
}

/// Per-layer projections of two prompt conditions onto probe directions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatReport {
    /// Projection of the original-prompt condition per layer.
    pub proj_original: Vec<f64>,
    /// Projection of the optimized-embedding condition per layer.
    pub proj_optimized: Vec<f64>,
    /// `proj_optimized - proj_original` per layer.
    pub delta: Vec<f64>,
}

/// Contrasts mean final-position hidden states between stimulus sets A
/// and B at every layer; each difference is normalized to unit length
/// (zero when its norm is below 1e-12).
pub fn lat_direction<T: Scalar>(
    stimuli_a: &[String],
    stimuli_b: &[String],
    ckpt: &ModelCheckpoint<T>,
) -> Result<ProbeDirections> {
    if stimuli_a.is_empty() || stimuli_b.is_empty() {
        return Err(Error::Usage("stimulus sets must be nonempty".to_string()));
    }
    let n_layers = ckpt.config().layers + 1;
    let d = ckpt.config().d;
    let mean_states = |stimuli: &[String]| -> Result<Vec<Vec<f64>>> {
        let mut sums = vec![vec![0.0f64; d]; n_layers];
        for text in stimuli {
            let tokens = ckpt.vocabulary().tokenize(text)?;
            if tokens.is_empty() {
                return Err(Error::Usage("stimulus text is empty".to_string()));
            }
            let embeds = ckpt.embed(&tokens)?;
            let (_, hidden) = ckpt.forward(&embeds)?;
            for layer in 0..n_layers {
                let last = hidden.last_position(layer);
                for c in 0..d {
                    sums[layer][c] += last[c].as_f64();
                }
            }
        }
        for layer_sum in &mut sums {
            for v in layer_sum.iter_mut() {
                *v /= stimuli.len() as f64;
            }
        }
        Ok(sums)
    };
    let mean_a = mean_states(stimuli_a)?;
    let mean_b = mean_states(stimuli_b)?;

    let directions = mean_a
        .iter()
        .zip(&mean_b)
        .map(|(a, b)| {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                vec![0.0; diff.len()]
            } else {
                diff.iter().map(|v| v / norm).collect()
            }
        })
        .collect();
    Ok(ProbeDirections { directions })
}

/// Runs prompt+query under both conditions and projects each layer's
/// final-position hidden state onto that layer's probe direction.
pub fn lat_delta<T: Scalar>(
    p_original: &PromptEmbedding<T>,
    p_optimized: &PromptEmbedding<T>,
    probes: &ProbeDirections,
    query: &str,
    ckpt: &ModelCheckpoint<T>,
) -> Result<LatReport> {
    p_original.check_compatible(ckpt)?;
    p_optimized.check_compatible(ckpt)?;
    let n_layers = ckpt.config().layers + 1;
    if probes.directions.len() != n_layers {
        return Err(Error::Param(format!(
            "probe has {} directions, model has {} layers",
            probes.directions.len(),
            n_layers
        )));
    }

    let project = |p: &PromptEmbedding<T>| -> Result<Vec<f64>> {
        let query_tokens = ckpt.vocabulary().tokenize(query)?;
        let query_rows = ckpt.token_rows(&query_tokens)?;
        let rows = Tensor2::concat_rows(&[p.matrix(), &query_rows])?;
        let total = rows.rows();
        if total > ckpt.config().max_seq {
            return Err(Error::Capacity {
                needed: total,
                max_seq: ckpt.config().max_seq,
            });
        }
        let h0 = rows.add(&ckpt.position_rows(total)?)?;
        let (_, hidden) = ckpt.forward(&h0)?;
        Ok((0..n_layers)
            .map(|layer| {
                let last = hidden.last_position(layer);
                last.iter()
                    .zip(&probes.directions[layer])
                    .map(|(h, dir)| h.as_f64() * dir)
                    .sum()
            })
            .collect())
    };

    let proj_original = project(p_original)?;
    let proj_optimized = project(p_optimized)?;
    let delta = proj_optimized
        .iter()
        .zip(&proj_original)
        .map(|(b, a)| b - a)
        .collect();
    Ok(LatReport {
        proj_original,
        proj_optimized,
        delta,
    })
}

impl LatReport {
    /// CSV rendering: layer, proj_A (original), proj_B (optimized), delta.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,proj_original,proj_optimized,delta\n");
        for i in 0..self.delta.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                i, self.proj_original[i], self.proj_optimized[i], self.delta[i]
            );
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:>14} {:>14} {:>14}",
            "layer", "proj_original", "proj_optimized", "delta"
        );
        for i in 0..self.delta.len() {
            let _ = writeln!(
                out,
                "{:>5}  {:>14.8} {:>14.8} {:>14.8}",
                i, self.proj_original[i], self.proj_optimized[i], self.delta[i]
            );
        }
        out
    }
}

/// Writes any serializable report as pretty JSON.
pub fn save_report<R: Serialize>(report: &R, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::init_prompt;
    use crate::inference::GenStop;
    use crate::model::{ModelConfig, Vocabulary};
    use proptest::prelude::*;

    fn checkpoint(seed: u64) -> ModelCheckpoint<f64> {
        let vocab = Vocabulary::from_corpus("abcd ");
        let config = ModelConfig {
            d: 8,
            layers: 2,
            heads: 2,
            d_ff: 16,
            max_seq: 24,
            vocab: vocab.len(),
        };
        ModelCheckpoint::init_random(config, vocab, seed).unwrap()
    }

    fn trace_from_rows(rows: Vec<Vec<f64>>) -> GenerationTrace<f64> {
        let cols = rows[0].len();
        let tokens = rows.iter().map(|r| argmax_lowest(r)).collect();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        GenerationTrace {
            tokens,
            distributions: Tensor2::from_vec(flat.len() / cols, cols, flat).unwrap(),
            stop: GenStop::MaxTokens,
            step_entropy_bits: None,
        }
    }

    #[test]
    fn anchor_softmax_analytic_two_tokens() {
        // v = (1,0) against e_0 = (1,0), e_1 = (0,1): p = softmax(1, 0).
        let scores = [1.0f64, 0.0];
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let z: f64 = exp.iter().sum();
        assert!((exp[0] / z - 0.731).abs() < 1e-3);

        let probs = softmax_rows(&Tensor2::from_vec(1, 2, scores.to_vec()).unwrap());
        assert!((probs.at(0, 0) - exp[0] / z).abs() < 1e-15);
        assert_eq!(argmax_lowest(probs.row(0)), 0);
    }

    #[test]
    fn anchor_report_unoptimized_prompt_distributions_are_exact() {
        let ckpt = checkpoint(3);
        let p = init_prompt("ab c", &ckpt).unwrap();
        let report = anchor_report(&p, &ckpt).unwrap();
        assert_eq!(report.positions.len(), p.len());

        // Oracle: naive double loop over positions and vocabulary.
        let emb = ckpt.embedding();
        for (r, pos) in report.positions.iter().enumerate() {
            let row = p.matrix().row(r);
            let mut scores = Vec::with_capacity(emb.rows());
            for j in 0..emb.rows() {
                let mut acc = 0.0;
                for c in 0..emb.cols() {
                    acc += row[c] * emb.at(j, c);
                }
                scores.push(acc);
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(pos.nearest_token, argmax_lowest(&probs));
            assert!((pos.p_original - probs[pos.original_token]).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_one_hot_is_zero() {
        let mut row = vec![0.0f64; 8];
        row[3] = 1.0;
        let trace = trace_from_rows(vec![row]);
        let report = trajectory_entropy(&trace).unwrap();
        assert_eq!(report.trajectory_entropy, 0.0);
    }

    #[test]
    fn entropy_uniform_v8_is_three_bits() {
        let row = vec![1.0f64 / 8.0; 8];
        let trace = trace_from_rows(vec![row.clone(), row]);
        let report = trajectory_entropy(&trace).unwrap();
        assert!((report.trajectory_entropy - 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_half_half_is_one_bit() {
        let mut row = vec![0.0f64; 8];
        row[0] = 0.5;
        row[1] = 0.5;
        let trace = trace_from_rows(vec![row]);
        let report = trajectory_entropy(&trace).unwrap();
        assert!((report.trajectory_entropy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_empty_trace_is_usage_error() {
        let trace = GenerationTrace::<f64> {
            tokens: vec![],
            distributions: Tensor2::zeros(0, 4),
            stop: GenStop::MaxTokens,
            step_entropy_bits: None,
        };
        assert!(matches!(
            trajectory_entropy(&trace),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn repetition_detects_period_two() {
        let found = detect_repetition_tokens(&[0, 1, 2, 3, 2, 3, 2, 3], 8, 3).unwrap();
        assert_eq!(found.period, 2);
        assert_eq!(found.ngram, vec![2, 3]);
        assert_eq!(found.repeats, 3);
    }

    #[test]
    fn repetition_prefers_smallest_period() {
        let found = detect_repetition_tokens(&[5, 5, 5, 5], 8, 3).unwrap();
        assert_eq!(found.period, 1);
        assert_eq!(found.ngram, vec![5]);
        assert_eq!(found.repeats, 4);
    }

    #[test]
    fn repetition_none_on_distinct_tokens() {
        assert_eq!(detect_repetition_tokens(&[1, 2, 3, 4, 5, 6], 8, 3), None);
    }

    #[test]
    fn lat_direction_identical_sets_is_zero() {
        let ckpt = checkpoint(4);
        let stim: Vec<String> = vec!["ab".into(), "cd".into()];
        let probes = lat_direction(&stim, &stim, &ckpt).unwrap();
        assert_eq!(probes.directions.len(), ckpt.config().layers + 1);
        for dir in &probes.directions {
            assert!(dir.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn lat_direction_antisymmetry() {
        let ckpt = checkpoint(4);
        let a: Vec<String> = vec!["ab".into()];
        let b: Vec<String> = vec!["cd".into()];
        let ab = lat_direction(&a, &b, &ckpt).unwrap();
        let ba = lat_direction(&b, &a, &ckpt).unwrap();
        for (x, y) in ab.directions.iter().zip(&ba.directions) {
            for (u, v) in x.iter().zip(y) {
                assert!((u + v).abs() < 1e-12);
            }
        }
        // Single stimulus per set: direction is the normalized difference.
        for dir in &ab.directions {
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9 || norm == 0.0);
        }
    }

    #[test]
    fn lat_direction_rejects_empty_set() {
        let ckpt = checkpoint(4);
        let a: Vec<String> = vec!["ab".into()];
        assert!(matches!(
            lat_direction(&a, &[], &ckpt),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn lat_delta_same_prompt_is_exact_zero() {
        let ckpt = checkpoint(5);
        let p = init_prompt("ab", &ckpt).unwrap();
        let a: Vec<String> = vec!["ab".into()];
        let b: Vec<String> = vec!["cd".into()];
        let probes = lat_direction(&a, &b, &ckpt).unwrap();
        let report = lat_delta(&p, &p, &probes, " cd", &ckpt).unwrap();
        assert_eq!(report.delta.len(), ckpt.config().layers + 1);
        for &d in &report.delta {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn lat_delta_zero_probe_gives_zero_projections() {
        let ckpt = checkpoint(5);
        let p = init_prompt("ab", &ckpt).unwrap();
        let probes = ProbeDirections {
            directions: vec![vec![0.0; ckpt.config().d]; ckpt.config().layers + 1],
        };
        let report = lat_delta(&p, &p, &probes, " cd", &ckpt).unwrap();
        assert!(report.proj_original.iter().all(|&v| v == 0.0));
        assert!(report.proj_optimized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lat_csv_has_header_and_rows() {
        let report = LatReport {
            proj_original: vec![0.1, 0.2],
            proj_optimized: vec![0.3, 0.1],
            delta: vec![0.2, -0.1],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "layer,proj_original,proj_optimized,delta");
        assert!(lines[1].starts_with("0,"));
    }

    proptest! {
        #[test]
        fn entropy_bounds_hold_on_random_rows(
            cols in 2usize..16,
            seed in any::<u64>(),
        ) {
            let mut state = seed | 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64).max(1e-12)
            };
            let raw: Vec<f64> = (0..cols).map(|_| next()).collect();
            let z: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let trace = trace_from_rows(vec![row]);
            let report = trajectory_entropy(&trace).unwrap();
            let h = report.trajectory_entropy;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (cols as f64).log2() + 1e-9);
        }

        #[test]
        fn repetition_matches_brute_force(
            len in 1usize..64,
            vocab in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut state = seed | 1;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as usize) % vocab
            };
            let tokens: Vec<usize> = (0..len).map(|_| next()).collect();

            // Brute force: for each period, count tail block repeats by
            // direct slice comparison.
            let mut expected = None;
            'outer: for period in 1..=REPETITION_MAX_PERIOD.min(tokens.len() / 2) {
                let mut repeats = 0;
                let mut end = tokens.len();
                while end >= period && tokens[end - period..end] == tokens[tokens.len() - period..]
                {
                    repeats += 1;
                    end -= period;
                }
                if repeats >= REPETITION_MIN_REPEATS {
                    expected = Some((period, repeats));
                    break 'outer;
                }
            }

            let got = detect_repetition_tokens(&tokens, REPETITION_MAX_PERIOD, REPETITION_MIN_REPEATS);
            match (expected, &got) {
                (None, None) => {}
                (Some((p, r)), Some(f)) => {
                    prop_assert_eq!(p, f.period);
                    prop_assert_eq!(r, f.repeats);
                    prop_assert_eq!(&tokens[tokens.len() - p..], f.ngram.as_slice());
                }
                other => prop_assert!(false, "mismatch: {:?}", other),
            }
        }
    }
}
