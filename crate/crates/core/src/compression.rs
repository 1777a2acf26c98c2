//! Deterministic first-N-words compression and ratio sweeps.

use serde::{Deserialize, Serialize};

use crate::prompt_structure::{check_ratio, retained_count, Prompt, PromptError};

/// Fraction of prompt tokens kept, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CompressionRatio(f64);

impl CompressionRatio {
    pub const IDENTITY: CompressionRatio = CompressionRatio(1.0);

    pub fn new(value: f64) -> Result<Self, PromptError> {
        check_ratio(value).map(CompressionRatio)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CompressionRatio {
    type Error = PromptError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        CompressionRatio::new(value)
    }
}

impl From<CompressionRatio> for f64 {
    fn from(r: CompressionRatio) -> f64 {
        r.0
    }
}

impl std::fmt::Display for CompressionRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

/// Ordered ratios to evaluate; starts at the 1.0 baseline and strictly
/// decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RatioSweep {
    ratios: Vec<CompressionRatio>,
}

impl RatioSweep {
    pub fn new(values: &[f64]) -> Result<Self, PromptError> {
        let ratios = values
            .iter()
            .map(|&v| CompressionRatio::new(v))
            .collect::<Result<Vec<_>, _>>()?;
        if ratios.first().map(|r| r.value()) != Some(1.0) {
            return Err(PromptError::InvalidAnnotation(
                "ratio sweep must start at the 1.0 baseline".into(),
            ));
        }
        if ratios.windows(2).any(|w| w[1].value() >= w[0].value()) {
            return Err(PromptError::InvalidAnnotation(
                "ratio sweep must be strictly decreasing".into(),
            ));
        }
        Ok(Self { ratios })
    }

    pub fn ratios(&self) -> &[CompressionRatio] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn contains(&self, r: f64) -> bool {
        self.ratios.iter().any(|x| (x.value() - r).abs() < 1e-9)
    }
}

impl Default for RatioSweep {
    /// `{1.0, 0.7, 0.5, 0.3}`.
    fn default() -> Self {
        Self::new(&[1.0, 0.7, 0.5, 0.3]).expect("default sweep is valid")
    }
}

impl TryFrom<Vec<f64>> for RatioSweep {
    type Error = PromptError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        RatioSweep::new(&values)
    }
}

impl From<RatioSweep> for Vec<f64> {
    fn from(s: RatioSweep) -> Vec<f64> {
        s.ratios.into_iter().map(f64::from).collect()
    }
}

/// Keeps the first `max(1, floor(r n))` tokens of `prompt`.
pub fn compress_first_n(prompt: &Prompt, r: CompressionRatio) -> Prompt {
    if r.value() == 1.0 {
        return prompt.clone();
    }
    // `Prompt` guarantees n >= 1 and `r` is validated, so this cannot fail.
    let kept = retained_count(prompt.len(), r.value()).unwrap_or(1);
    prompt.prefix(kept)
}

/// Compresses `prompt` at every ratio of `sweep`, in sweep order.
pub fn sweep(prompt: &Prompt, sweep: &RatioSweep) -> Vec<(CompressionRatio, Prompt)> {
    sweep
        .ratios()
        .iter()
        .map(|&r| (r, compress_first_n(prompt, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_structure::{segment_survival, survival_given_retained, tokenize, SegmentSpan, SurvivalMode};
    use proptest::prelude::*;

    const MBPP_EXAMPLE: &str = "Write a Python function to solve this task. Only provide the code.\n\
                                Task: Write a function to add two numbers.\nCode:";

    fn ratio(v: f64) -> CompressionRatio {
        CompressionRatio::new(v).unwrap()
    }

    #[test]
    fn mbpp_example_truncates_to_preamble() {
        let prompt = tokenize(MBPP_EXAMPLE).unwrap();
        let out = compress_first_n(&prompt, ratio(0.3));
        assert_eq!(out.text(), "Write a Python function to solve");
    }

    #[test]
    fn identity_and_halving() {
        let prompt = tokenize("a b c d e f g h i j").unwrap();
        assert_eq!(compress_first_n(&prompt, CompressionRatio::IDENTITY), prompt);
        assert_eq!(compress_first_n(&prompt, ratio(0.5)).text(), "a b c d e");
        // Whitespace is normalised on re-join.
        let messy = tokenize("a   b\n c").unwrap();
        assert_eq!(compress_first_n(&messy, CompressionRatio::IDENTITY).text(), "a b c");
    }

    #[test]
    fn sweep_lengths() {
        let prompt = tokenize(&vec!["w"; 30].join(" ")).unwrap();
        let out = sweep(&prompt, &RatioSweep::default());
        let lens: Vec<usize> = out.iter().map(|(_, p)| p.len()).collect();
        assert_eq!(lens, [30, 21, 15, 9]);
        let single = sweep(&prompt, &RatioSweep::new(&[1.0]).unwrap());
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].1, prompt);
    }

    #[test]
    fn sweep_validation() {
        assert!(RatioSweep::new(&[0.7, 0.5]).is_err());
        assert!(RatioSweep::new(&[1.0, 0.5, 0.5]).is_err());
        assert!(RatioSweep::new(&[1.0, 0.5, 0.7]).is_err());
        assert!(RatioSweep::new(&[1.0, 0.0]).is_err());
        assert!(CompressionRatio::new(1.01).is_err());
        let parsed: RatioSweep = serde_json::from_str("[1.0, 0.3]").unwrap();
        assert!(parsed.contains(0.3));
        assert!(serde_json::from_str::<RatioSweep>("[0.3]").is_err());
    }

    fn arb_prompt() -> impl Strategy<Value = Prompt> {
        prop::collection::vec("[a-z]{1,6}", 1..80).prop_map(|t| Prompt::from_tokens(t).unwrap())
    }

    proptest! {
        #[test]
        fn compression_is_prefix_and_nested(p in arb_prompt(), r1 in 0.01f64..=1.0, r2 in 0.01f64..=1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let small = compress_first_n(&p, ratio(lo));
            let big = compress_first_n(&p, ratio(hi));
            prop_assert!(p.tokens().starts_with(small.tokens()));
            prop_assert!(big.tokens().starts_with(small.tokens()));
            prop_assert!(small.len() <= p.len());
            prop_assert_eq!(small.len(), retained_count(p.len(), lo).unwrap());
        }

        #[test]
        fn survival_on_compressed_prompt_matches_closed_form(
            p in arb_prompt(), r in 0.01f64..=1.0, a_seed in 0usize..80, len in 0usize..20
        ) {
            let n = p.len();
            let a = 1 + a_seed % n;
            let b = (a + len).min(n);
            let span = SegmentSpan::new("s", a, b, 1.0).unwrap();
            let compressed = compress_first_n(&p, ratio(r));
            // Span fully inside the compressed prompt <=> strict survival.
            let inside = b <= compressed.len();
            let closed = segment_survival(&span, n, r, SurvivalMode::Strict).unwrap();
            prop_assert_eq!(closed == 1.0, inside);
            prop_assert_eq!(survival_given_retained(&span, compressed.len(), SurvivalMode::Strict), closed);
        }
    }
}
