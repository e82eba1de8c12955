//! Bundled desk-scale experiments, generated deterministically from seeds.
//!
//! Both tasks share one construction: the pretraining corpus interleaves
//! two instruction-conditioned behaviors over the same surface format
//! `<instruction> <input> => <label>`. Mode A is the behavior we want
//! (sentiment, or addition); mode B is a competing behavior with disjoint
//! labels. The evaluation prompt is a wording the model never saw, so the
//! base model's mode choice is unreliable — and prompt-embedding
//! optimization has something real to do: steer the frozen model into
//! mode A without changing a single weight.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::DatasetRecord;
use crate::inference::Matcher;

/// Everything needed to run one bundled experiment end to end.
#[derive(Debug, Clone)]
pub struct TaskBundle {
    /// Pretraining documents, one per line.
    pub corpus: Vec<String>,
    pub train: Vec<DatasetRecord>,
    pub val: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
    /// The natural-language instruction whose embedding gets optimized.
    pub prompt: String,
    pub matcher: Matcher,
    /// Stimuli for the activation probe: mode-A positive continuations.
    pub stimuli_a: Vec<String>,
    /// Stimuli for the activation probe: mode-B (neutral) continuations.
    pub stimuli_b: Vec<String>,
    /// Characters the vocabulary must cover for this task.
    pub charset: String,
}

/// Dataset sizes for a bundle.
#[derive(Debug, Clone, Copy)]
pub struct TaskSizes {
    pub corpus_docs: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for TaskSizes {
    fn default() -> Self {
        TaskSizes {
            corpus_docs: 1100,
            train: 64,
            val: 16,
            test: 100,
        }
    }
}

/// Character set shared by both bundled tasks (plus EOS in the vocabulary).
pub const TASK_CHARSET: &str = "abcdefghijklmnopqrstuvwxyz0123456789 :=>+.";

// Lexicons chosen to avoid near-anagram pairs across classes; at
// character level the model must read letter order, and e.g. cold/cool
// would collide under a bag-of-letters shortcut.
const POSITIVE_WORDS: [&str; 8] = [
    "happy", "jolly", "shiny", "merry", "bright", "super", "golden", "vivid",
];
const NEGATIVE_WORDS: [&str; 8] = [
    "bleak", "rotten", "nasty", "grim", "awful", "dire", "foul", "cruel",
];
const NOUNS: [&str; 10] = [
    "film", "day", "song", "meal", "game", "book", "trip", "show", "place", "gift",
];

/// Mode-A instruction wordings seen during pretraining.
const SENTIMENT_INSTRUCTIONS: [&str; 3] =
    ["the mood of the text:", "rate the feeling:", "mood check:"];
/// Mode-B instruction wordings seen during pretraining.
const LETTER_INSTRUCTIONS: [&str; 2] = ["the first letter kind:", "vowel check:"];

/// The instruction to optimize. A wording the base model never saw, in the
/// style of a natural task description.
pub const SENTIMENT_PROMPT: &str = "is the text mood pos or neg:";

fn sentiment_sentence(rng: &mut ChaCha8Rng) -> (String, bool) {
    let positive = rng.gen_bool(0.5);
    let word = if positive {
        POSITIVE_WORDS[rng.gen_range(0..POSITIVE_WORDS.len())]
    } else {
        NEGATIVE_WORDS[rng.gen_range(0..NEGATIVE_WORDS.len())]
    };
    let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
    let sentence = match rng.gen_range(0..4) {
        0 => format!("the {noun} was {word}"),
        1 => format!("i felt {word} about it"),
        2 => format!("what a {word} {noun}"),
        _ => format!("the {noun} seemed {word}"),
    };
    (sentence, positive)
}

fn first_letter_label(sentence: &str) -> &'static str {
    let first = sentence.chars().next().unwrap_or('x');
    if "aeiou".contains(first) {
        "vow"
    } else {
        "con"
    }
}

/// The sentiment experiment: classify short synthetic reviews as
/// `pos`/`neg`, against a competing first-letter labeling mode.
pub fn sentiment_toy(seed: u64, sizes: TaskSizes) -> TaskBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Pretraining corpus: interleaved mode-A and mode-B documents.
    let mut corpus = Vec::with_capacity(sizes.corpus_docs);
    let mut stimuli_a = Vec::new();
    let mut stimuli_b = Vec::new();
    for i in 0..sizes.corpus_docs {
        let (sentence, positive) = sentiment_sentence(&mut rng);
        // Two thirds sentiment mode, one third the competing mode.
        if i % 3 != 2 {
            let instr = SENTIMENT_INSTRUCTIONS[rng.gen_range(0..SENTIMENT_INSTRUCTIONS.len())];
            let label = if positive { "pos" } else { "neg" };
            let doc = format!("{instr} {sentence} => {label}");
            if positive && stimuli_a.len() < 8 {
                stimuli_a.push(doc.clone());
            }
            corpus.push(doc);
        } else {
            let instr = LETTER_INSTRUCTIONS[rng.gen_range(0..LETTER_INSTRUCTIONS.len())];
            let label = first_letter_label(&sentence);
            let doc = format!("{instr} {sentence} => {label}");
            if stimuli_b.len() < 8 {
                stimuli_b.push(doc.clone());
            }
            corpus.push(doc);
        }
    }

    // Labeled examples in the deployment format: the instruction is the
    // prompt, so records carry only the sentence and the answer.
    let record = |rng: &mut ChaCha8Rng| {
        let (sentence, positive) = sentiment_sentence(rng);
        DatasetRecord {
            input: format!(" {sentence} => "),
            target: (if positive { "pos" } else { "neg" }).to_string(),
        }
    };
    let train: Vec<_> = (0..sizes.train).map(|_| record(&mut rng)).collect();
    let val: Vec<_> = (0..sizes.val).map(|_| record(&mut rng)).collect();
    let test: Vec<_> = (0..sizes.test).map(|_| record(&mut rng)).collect();

    TaskBundle {
        corpus,
        train,
        val,
        test,
        prompt: SENTIMENT_PROMPT.to_string(),
        matcher: Matcher::Exact,
        stimuli_a,
        stimuli_b,
        charset: TASK_CHARSET.to_string(),
    }
}

/// The instruction to optimize for the arithmetic task.
pub const ARITH_PROMPT: &str = "work out the answer with ans:";

/// Mode-A instruction wordings for addition.
const ADD_INSTRUCTIONS: [&str; 2] = ["add the numbers:", "sum of both:"];
/// Mode-B instruction wordings for the competing max task.
const MAX_INSTRUCTIONS: [&str; 2] = ["the bigger number:", "max of both:"];

/// Single-digit addition with a delimiter-marked answer, against a
/// competing maximum-of-both mode. Answers are extracted after `ans`.
pub fn arith_toy(seed: u64, sizes: TaskSizes) -> TaskBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut corpus = Vec::with_capacity(sizes.corpus_docs);
    let mut stimuli_a = Vec::new();
    let mut stimuli_b = Vec::new();
    for i in 0..sizes.corpus_docs {
        let a = rng.gen_range(0..10u32);
        let b = rng.gen_range(0..10u32);
        if i % 2 == 0 {
            let instr = ADD_INSTRUCTIONS[rng.gen_range(0..ADD_INSTRUCTIONS.len())];
            let doc = format!("{instr} {a}+{b} => ans {}", a + b);
            if stimuli_a.len() < 8 {
                stimuli_a.push(doc.clone());
            }
            corpus.push(doc);
        } else {
            let instr = MAX_INSTRUCTIONS[rng.gen_range(0..MAX_INSTRUCTIONS.len())];
            let doc = format!("{instr} {a}+{b} => ans {}", a.max(b));
            if stimuli_b.len() < 8 {
                stimuli_b.push(doc.clone());
            }
            corpus.push(doc);
        }
    }

    let record = |rng: &mut ChaCha8Rng| {
        let a = rng.gen_range(0..10u32);
        let b = rng.gen_range(0..10u32);
        DatasetRecord {
            input: format!(" {a}+{b} => "),
            target: format!("ans {}", a + b),
        }
    };
    let train: Vec<_> = (0..sizes.train).map(|_| record(&mut rng)).collect();
    let val: Vec<_> = (0..sizes.val).map(|_| record(&mut rng)).collect();
    let test: Vec<_> = (0..sizes.test).map(|_| record(&mut rng)).collect();

    TaskBundle {
        corpus,
        train,
        val,
        test,
        prompt: ARITH_PROMPT.to_string(),
        matcher: Matcher::AfterMarker("ans".to_string()),
        stimuli_a,
        stimuli_b,
        charset: TASK_CHARSET.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocabulary;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = sentiment_toy(7, TaskSizes::default());
        let b = sentiment_toy(7, TaskSizes::default());
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = sentiment_toy(8, TaskSizes::default());
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn charset_covers_all_generated_text() {
        for seed in [1u64, 2, 3] {
            for bundle in [
                sentiment_toy(seed, TaskSizes::default()),
                arith_toy(seed, TaskSizes::default()),
            ] {
                let vocab = Vocabulary::from_corpus(&bundle.charset);
                for doc in &bundle.corpus {
                    vocab.tokenize(doc).unwrap();
                }
                for r in bundle.train.iter().chain(&bundle.val).chain(&bundle.test) {
                    vocab.tokenize(&r.input).unwrap();
                    vocab.tokenize(&r.target).unwrap();
                }
                vocab.tokenize(&bundle.prompt).unwrap();
            }
        }
    }

    #[test]
    fn sentiment_labels_match_lexicon() {
        let bundle = sentiment_toy(3, TaskSizes::default());
        for r in bundle.train.iter().chain(&bundle.test) {
            let is_pos = POSITIVE_WORDS.iter().any(|w| r.input.contains(w));
            let is_neg = NEGATIVE_WORDS.iter().any(|w| r.input.contains(w));
            assert!(is_pos ^ is_neg, "ambiguous sentence {:?}", r.input);
            assert_eq!(r.target == "pos", is_pos);
        }
    }

    #[test]
    fn arith_answers_are_sums() {
        let bundle = arith_toy(3, TaskSizes::default());
        for r in bundle.train.iter().chain(&bundle.test) {
            let trimmed = r.input.trim().trim_end_matches("=>").trim();
            let (a, b) = trimmed.split_once('+').unwrap();
            let sum: u32 = a.trim().parse::<u32>().unwrap() + b.trim().parse::<u32>().unwrap();
            assert_eq!(r.target, format!("ans {sum}"));
        }
    }

    #[test]
    fn prompt_wording_is_unseen_in_corpus() {
        let bundle = sentiment_toy(5, TaskSizes::default());
        for doc in &bundle.corpus {
            assert!(!doc.contains(&bundle.prompt));
        }
    }

    #[test]
    fn corpus_lines_fit_desk_scale_context() {
        let sizes = TaskSizes::default();
        for bundle in [sentiment_toy(1, sizes), arith_toy(1, sizes)] {
            for doc in &bundle.corpus {
                assert!(doc.len() + 1 <= 80, "doc too long: {doc:?}");
            }
        }
    }
}
