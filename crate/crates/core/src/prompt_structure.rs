//! Word-token prompts, weighted instruction segments and survival under
//! first-N-words truncation.
//!
//! Indices on [`SegmentSpan`] are 1-based and inclusive, so a span `[9, 20]`
//! covers the 9th through 20th word of the prompt.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of segment weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Default coverage threshold for [`SurvivalMode::Fractional`].
pub const DEFAULT_FRACTIONAL_THRESHOLD: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("prompt is empty or whitespace-only")]
    EmptyPrompt,
    #[error("compression ratio {0} is outside (0, 1]")]
    InvalidRatio(f64),
    #[error("span [{a}, {b}] does not fit a prompt of {n} tokens")]
    SpanOutOfRange { a: usize, b: usize, n: usize },
    #[error("invalid segment annotation: {0}")]
    InvalidAnnotation(String),
    #[error("profile `{profile}` has no psi_table entry for r={ratio} and no template spans")]
    ProfileIncomplete { profile: String, ratio: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("failed to read profile {path}: {message}")]
    ProfileIo { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PromptError>;

/// A prompt split into whitespace-delimited word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_benchmark: Option<String>,
}

impl Prompt {
    /// Builds a prompt from pre-split tokens. Tokens must be non-empty and
    /// free of whitespace.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(PromptError::EmptyPrompt);
        }
        if tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(PromptError::InvalidAnnotation(
                "tokens must be non-empty and contain no whitespace".into(),
            ));
        }
        Ok(Self {
            tokens,
            source_benchmark: None,
        })
    }

    pub fn with_benchmark(mut self, benchmark: impl Into<String>) -> Self {
        self.source_benchmark = Some(benchmark.into());
        self
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token count `n`. Always at least 1.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens re-joined with single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Keeps the first `count` tokens (at least one).
    pub(crate) fn prefix(&self, count: usize) -> Prompt {
        let count = count.clamp(1, self.tokens.len());
        Prompt {
            tokens: self.tokens[..count].to_vec(),
            source_benchmark: self.source_benchmark.clone(),
        }
    }
}

/// Splits `text` into maximal runs of non-whitespace characters.
pub fn tokenize(text: &str) -> Result<Prompt> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(PromptError::EmptyPrompt);
    }
    Ok(Prompt {
        tokens,
        source_benchmark: None,
    })
}

/// How `r * n` becomes an integer token budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetentionRule {
    #[default]
    Floor,
    Round,
}

pub(crate) fn check_ratio(r: f64) -> Result<f64> {
    if r.is_finite() && r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(PromptError::InvalidRatio(r))
    }
}

/// Number of tokens kept by first-N-words compression: `max(1, floor(r n))`.
pub fn retained_count(n: usize, r: f64) -> Result<usize> {
    retained_count_with(n, r, RetentionRule::Floor)
}

pub fn retained_count_with(n: usize, r: f64, rule: RetentionRule) -> Result<usize> {
    let r = check_ratio(r)?;
    if n == 0 {
        return Err(PromptError::EmptyPrompt);
    }
    if r == 1.0 {
        return Ok(n);
    }
    // r*n in floating point can land a hair under an integer (0.7*30 =
    // 20.999...), so nudge by a relative epsilon before flooring.
    let exact = r * n as f64;
    let nudged = exact + exact * 8.0 * f64::EPSILON;
    let kept = match rule {
        RetentionRule::Floor => nudged.floor(),
        RetentionRule::Round => exact.round(),
    } as usize;
    Ok(kept.clamp(1, n))
}

/// One weighted instruction segment `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub label: String,
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl SegmentSpan {
    pub fn new(label: impl Into<String>, a: usize, b: usize, weight: f64) -> Result<Self> {
        let span = Self {
            label: label.into(),
            a,
            b,
            weight,
        };
        span.validate()?;
        Ok(span)
    }

    fn validate(&self) -> Result<()> {
        if self.a < 1 || self.a > self.b {
            return Err(PromptError::InvalidAnnotation(format!(
                "span `{}` must satisfy 1 <= a <= b, got [{}, {}]",
                self.label, self.a, self.b
            )));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(PromptError::InvalidAnnotation(format!(
                "span `{}` weight {} is outside [0, 1]",
                self.label, self.weight
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The instruction segments of one prompt of length `prompt_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    spans: Vec<SegmentSpan>,
    prompt_length: usize,
}

impl SegmentAnnotation {
    pub fn new(spans: Vec<SegmentSpan>, prompt_length: usize) -> Result<Self> {
        if prompt_length == 0 {
            return Err(PromptError::EmptyPrompt);
        }
        if spans.is_empty() {
            return Err(PromptError::InvalidAnnotation("no segments".into()));
        }
        for span in &spans {
            span.validate()?;
            if span.b > prompt_length {
                return Err(PromptError::SpanOutOfRange {
                    a: span.a,
                    b: span.b,
                    n: prompt_length,
                });
            }
        }
        if spans.windows(2).any(|w| w[0].a > w[1].a) {
            return Err(PromptError::InvalidAnnotation(
                "spans must be listed in ascending start index".into(),
            ));
        }
        let total: f64 = spans.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(PromptError::InvalidAnnotation(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { spans, prompt_length })
    }

    pub fn spans(&self) -> &[SegmentSpan] {
        &self.spans
    }

    pub fn prompt_length(&self) -> usize {
        self.prompt_length
    }
}

/// Survival semantics for a single segment.
///
/// `Strict` is the all-or-nothing indicator `b <= retained`. `Fractional`
/// uses the covered fraction of the span and rounds it up to full survival
/// once it reaches the threshold. `Fractional(1.0)` is the pure-coverage
/// rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalMode {
    #[default]
    Strict,
    Fractional(f64),
}

impl SurvivalMode {
    pub fn fractional() -> Self {
        SurvivalMode::Fractional(DEFAULT_FRACTIONAL_THRESHOLD)
    }

    fn validate(self) -> Result<Self> {
        match self {
            SurvivalMode::Fractional(theta) if !(theta > 0.0 && theta <= 1.0) => Err(PromptError::InvalidProfile(
                format!("fractional threshold {theta} outside (0, 1]"),
            )),
            mode => Ok(mode),
        }
    }
}

/// Survival of `span` when the first `retained` tokens are kept.
pub fn survival_given_retained(span: &SegmentSpan, retained: usize, mode: SurvivalMode) -> f64 {
    match mode {
        SurvivalMode::Strict => {
            if span.b <= retained {
                1.0
            } else {
                0.0
            }
        }
        SurvivalMode::Fractional(theta) => {
            let covered = (span.b.min(retained) + 1).saturating_sub(span.a);
            let coverage = covered as f64 / span.len() as f64;
            if coverage >= theta {
                1.0
            } else {
                coverage
            }
        }
    }
}

/// ψ for one span of a prompt with `n` tokens compressed at ratio `r`.
pub fn segment_survival(span: &SegmentSpan, n: usize, r: f64, mode: SurvivalMode) -> Result<f64> {
    segment_survival_with(span, n, r, mode, RetentionRule::Floor)
}

pub fn segment_survival_with(
    span: &SegmentSpan,
    n: usize,
    r: f64,
    mode: SurvivalMode,
    rule: RetentionRule,
) -> Result<f64> {
    span.validate()?;
    if span.b > n {
        return Err(PromptError::SpanOutOfRange {
            a: span.a,
            b: span.b,
            n,
        });
    }
    let mode = mode.validate()?;
    let retained = retained_count_with(n, r, rule)?;
    Ok(survival_given_retained(span, retained, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalResult {
    /// `(label, ψ)` in annotation order.
    pub per_segment: Vec<(String, f64)>,
    /// Weighted survival Ψ.
    pub weighted: f64,
}

/// Weighted instruction survival Ψ(x, r) = Σ w_j ψ_j.
pub fn weighted_survival(annotation: &SegmentAnnotation, r: f64, mode: SurvivalMode) -> Result<SurvivalResult> {
    weighted_survival_with(annotation, r, mode, RetentionRule::Floor)
}

pub fn weighted_survival_with(
    annotation: &SegmentAnnotation,
    r: f64,
    mode: SurvivalMode,
    rule: RetentionRule,
) -> Result<SurvivalResult> {
    let mode = mode.validate()?;
    let retained = retained_count_with(annotation.prompt_length, r, rule)?;
    Ok(score_spans(annotation.spans(), retained, mode))
}

fn score_spans(spans: &[SegmentSpan], retained: usize, mode: SurvivalMode) -> SurvivalResult {
    let per_segment: Vec<(String, f64)> = spans
        .iter()
        .map(|s| (s.label.clone(), survival_given_retained(s, retained, mode)))
        .collect();
    let weighted = spans
        .iter()
        .zip(&per_segment)
        .map(|(s, (_, psi))| s.weight * psi)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    SurvivalResult { per_segment, weighted }
}

/// Structural description of a benchmark, loaded from a TOML profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProfile {
    pub name: String,
    pub mean_tokens: f64,
    #[serde(default)]
    pub survival_mode: SurvivalMode,
    #[serde(default)]
    pub retention: RetentionRule,
    #[serde(default, rename = "spans", skip_serializing_if = "Vec::is_empty")]
    pub template_spans: Vec<SegmentSpan>,
    /// Ratio (as written, e.g. `"0.3"`) to Ψ.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub psi_table: BTreeMap<String, f64>,
}

impl BenchmarkProfile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let profile: BenchmarkProfile = toml::from_str(text).map_err(|e| PromptError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::ProfileIo {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PromptError::InvalidProfile(msg) => PromptError::InvalidProfile(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_tokens.is_finite() && self.mean_tokens >= 1.0) {
            return Err(PromptError::InvalidProfile(format!(
                "{}: mean_tokens must be >= 1",
                self.name
            )));
        }
        self.survival_mode.validate()?;
        if self.template_spans.is_empty() && self.psi_table.is_empty() {
            return Err(PromptError::InvalidProfile(format!(
                "{}: needs spans or psi_table",
                self.name
            )));
        }
        for (key, psi) in &self.psi_table {
            let r: f64 = key
                .trim()
                .parse()
                .map_err(|_| PromptError::InvalidProfile(format!("{}: bad ratio key `{key}`", self.name)))?;
            check_ratio(r)?;
            if !(0.0..=1.0).contains(psi) {
                return Err(PromptError::InvalidProfile(format!(
                    "{}: psi_table[{key}] = {psi} outside [0, 1]",
                    self.name
                )));
            }
        }
        if !self.template_spans.is_empty() {
            for span in &self.template_spans {
                span.validate()?;
            }
            let total: f64 = self.template_spans.iter().map(|s| s.weight).sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(PromptError::InvalidAnnotation(format!(
                    "{}: weights sum to {total}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Typical prompt length used for template survival.
    pub fn typical_length(&self) -> usize {
        (self.mean_tokens.round() as usize).max(1)
    }

    pub fn table_lookup(&self, r: f64) -> Option<f64> {
        self.psi_table.iter().find_map(|(k, v)| {
            let key: f64 = k.trim().parse().ok()?;
            ((key - r).abs() < 1e-9).then_some(*v)
        })
    }

    /// Ψ at ratio `r`: a psi_table hit wins, otherwise the template spans
    /// are scored at the typical length.
    pub fn survival(&self, r: f64) -> Result<f64> {
        check_ratio(r)?;
        if let Some(psi) = self.table_lookup(r) {
            return Ok(psi);
        }
        Ok(self.template_survival(self.typical_length(), r)?.weighted)
    }

    /// Scores the template spans against a concrete prompt length. Spans
    /// reaching past `n` are clipped; spans starting past `n` never survive.
    pub fn template_survival(&self, n: usize, r: f64) -> Result<SurvivalResult> {
        if self.template_spans.is_empty() {
            return Err(PromptError::ProfileIncomplete {
                profile: self.name.clone(),
                ratio: r,
            });
        }
        let retained = retained_count_with(n, r, self.retention)?;
        let mode = self.survival_mode.validate()?;
        let per_segment: Vec<(String, f64)> = self
            .template_spans
            .iter()
            .map(|s| {
                let psi = if s.a > n {
                    0.0
                } else {
                    let clipped = SegmentSpan {
                        b: s.b.min(n),
                        ..s.clone()
                    };
                    survival_given_retained(&clipped, retained, mode)
                };
                (s.label.clone(), psi)
            })
            .collect();
        let weighted = self
            .template_spans
            .iter()
            .zip(&per_segment)
            .map(|(s, (_, psi))| s.weight * psi)
            .sum::<f64>()
            .clamp(0.0, 1.0);
        Ok(SurvivalResult { per_segment, weighted })
    }

    /// Ψ for a specific prompt of `n` tokens: template spans when present,
    /// otherwise the psi_table entry.
    pub fn survival_for_length(&self, n: usize, r: f64) -> Result<f64> {
        check_ratio(r)?;
        if !self.template_spans.is_empty() {
            return Ok(self.template_survival(n, r)?.weighted);
        }
        self.table_lookup(r).ok_or_else(|| PromptError::ProfileIncomplete {
            profile: self.name.clone(),
            ratio: r,
        })
    }
}

/// Ψ for a benchmark profile at ratio `r`.
pub fn profile_survival(profile: &BenchmarkProfile, r: f64) -> Result<f64> {
    profile.survival(r)
}

/// Bundled profiles for the three reference benchmarks.
pub mod builtin {
    use super::BenchmarkProfile;

    pub const MBPP: &str = include_str!("../data/profiles/mbpp.toml");
    pub const HUMANEVAL: &str = include_str!("../data/profiles/humaneval.toml");
    pub const GSM8K: &str = include_str!("../data/profiles/gsm8k.toml");

    pub fn get(name: &str) -> Option<BenchmarkProfile> {
        let text = match name.to_ascii_lowercase().as_str() {
            "mbpp" => MBPP,
            "humaneval" => HUMANEVAL,
            "gsm8k" => GSM8K,
            _ => return None,
        };
        BenchmarkProfile::from_toml_str(text).ok()
    }

    pub fn all() -> Vec<BenchmarkProfile> {
        ["mbpp", "humaneval", "gsm8k"].iter().filter_map(|n| get(n)).collect()
    }
}
