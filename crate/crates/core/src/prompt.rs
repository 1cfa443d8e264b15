//! Prompt templates with `<<NAME>>` placeholders.
//!
//! Rendering is a single pass over the template body: each well-formed
//! marker is replaced by its binding and everything else is copied
//! through untouched, so binding values that themselves contain marker
//! syntax are inserted literally and never re-expanded. This marker
//! syntax is deliberately different from the `{{slot}}` syntax of
//! dimension templates; the two layers never collide.
//!
//! [`catalog`] holds the built-in prompts used by the pipeline stages.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

/// A named prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    placeholders: BTreeSet<String>,
}

/// The outcome of rendering: the prompt text plus any bindings that the
/// template never referenced (callers typically log these).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub unused_bindings: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template:?} is missing bindings for: {}", names.join(", "))]
    MissingBindings { template: String, names: Vec<String> },
}

impl PromptTemplate {
    /// Wraps a template body, scanning it for `<<NAME>>` markers. A
    /// marker name consists of `A-Z`, `0-9`, and `_`; any malformed
    /// marker-like text is treated as literal content.
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let name = name.into();
        let body = body.into();
        let mut placeholders = BTreeSet::new();
        for (_, marker) in scan_markers(&body) {
            placeholders.insert(marker.to_string());
        }
        PromptTemplate {
            name,
            body,
            placeholders,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Distinct marker names found in the body.
    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitutes every marker with its binding.
    ///
    /// Fails if any marker lacks a binding, listing all missing names.
    /// Bindings for names the template never mentions are reported in
    /// [`Rendered::unused_bindings`] rather than treated as errors.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<Rendered, PromptError> {
        let missing: Vec<String> = self
            .placeholders
            .iter()
            .filter(|p| !bindings.contains_key(*p))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(PromptError::MissingBindings {
                template: self.name.clone(),
                names: missing,
            });
        }

        let mut text = String::with_capacity(self.body.len());
        let mut cursor = 0;
        for (range, marker) in scan_markers(&self.body) {
            text.push_str(&self.body[cursor..range.0]);
            text.push_str(&bindings[marker]);
            cursor = range.1;
        }
        text.push_str(&self.body[cursor..]);

        let unused_bindings: Vec<String> = bindings
            .keys()
            .filter(|k| !self.placeholders.contains(*k))
            .cloned()
            .collect();
        Ok(Rendered {
            text,
            unused_bindings,
        })
    }
}

/// Finds well-formed `<<NAME>>` markers, returning their byte ranges
/// and names in order of appearance.
fn scan_markers(body: &str) -> Vec<((usize, usize), &str)> {
    let mut found = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i + 4 <= bytes.len() {
        if &bytes[i..i + 2] == b"<<" {
            let start = i + 2;
            let mut end = start;
            while end < bytes.len()
                && (bytes[end].is_ascii_uppercase()
                    || bytes[end].is_ascii_digit()
                    || bytes[end] == b'_')
            {
                end += 1;
            }
            if end > start && end + 2 <= bytes.len() && &bytes[end..end + 2] == b">>" {
                found.push(((i, end + 2), &body[start..end]));
                i = end + 2;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// Builds one `key: value` binding map from pairs.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// The built-in prompt catalog.
///
/// Bodies are fixed wording the rest of the pipeline depends on (for
/// example, downstream parsing of summaries that begin "The first
/// post..." or "The conversation so far..."), including their quirks;
/// do not edit them casually.
pub mod catalog {
    use super::PromptTemplate;

    pub const POST_SUMMARY: &str = "post_summary";
    pub const INITIAL_POST_SUMMARY: &str = "initial_post_summary";
    pub const ANCESTRAL_CHAIN_SUMMARY: &str = "ancestral_chain_summary";
    pub const PEER_CHAIN_SUMMARY: &str = "peer_chain_summary";
    pub const CONVERSATION_SUMMARY: &str = "conversation_summary";
    pub const COMMUNITY_PURPOSE: &str = "community_purpose";
    pub const COMMUNITY_VALUES: &str = "community_values";
    pub const INFERENCE_GENERATION: &str = "inference_generation";
    pub const INFERENCE_GENERATION_IMPLAUSIBLE: &str = "inference_generation_implausible";
    pub const INFERENCE_CLASSIFICATION: &str = "inference_classification";
    pub const INFERENCE_CLASSIFICATION_ZERO_SHOT: &str = "inference_classification_zero_shot";

    /// Two-sentence summary of a single post or comment.
    pub fn post_summary() -> PromptTemplate {
        PromptTemplate::new(
            POST_SUMMARY,
            "The following text comes from a social media forum. Summarize the text in a maximum of 2 sentences. Do not hallucinate and do not say that the text is too short to summarize.\n\n<<TEXT>>",
        )
    }

    /// One-sentence summary of the conversation's top-level post.
    pub fn initial_post_summary() -> PromptTemplate {
        PromptTemplate::new(
            INITIAL_POST_SUMMARY,
            "Your task is to distill the provided context about the top-level post in a subreddit conversation into a succinct 1-sentence summary.\n\nContext Types:\n- Top-level Post Title: the title of the initial top-level post\n- Top-level Post Summary: a summary of the initial top-level post\n\nContext:\n- Top-level Post Title: <<TITLE>>\n- Top-level Post Summary: <<POST_SUMMARY>>\n\nWrite a 1-sentence summary of the provided context. Output just the summary and no other text. Start your response with 'The first post...'.",
        )
    }

    /// Global summary of a parent-child chain of local summaries.
    /// `SUMMARIES` binds to newline-joined "- ..." bullet lines.
    pub fn ancestral_chain_summary() -> PromptTemplate {
        PromptTemplate::new(
            ANCESTRAL_CHAIN_SUMMARY,
            "Below are <<SUMMARY_COUNT>> summaries social media posts in an ancestral chain (parent-child relationships as you read left to right). Your task is to generate a global summary of the overall chain based on the local summaries in three sentences or less.\n<<SUMMARIES>>",
        )
    }

    /// Global summary of a chain of same-parent sibling summaries.
    pub fn peer_chain_summary() -> PromptTemplate {
        PromptTemplate::new(
            PEER_CHAIN_SUMMARY,
            "Below are <<SUMMARY_COUNT>> summaries of a chain of social media comments under a single parent post/comment. Your task is to generate a global summary of the overall chain based on the local summaries in three sentences or less.\n<<SUMMARIES>>",
        )
    }

    /// Merges the ancestral and peer chain summaries into the final
    /// conversation summary.
    pub fn conversation_summary() -> PromptTemplate {
        PromptTemplate::new(
            CONVERSATION_SUMMARY,
            "Your task is to distill the provided context about the conversational context into a 1-2 sentence summary.\n\nConversational Context Types:\n- Ancestors Summary: a summary of the chain of texts formed by a parent-child relationship leading up to the current text\n- Preceding Peers Summary: a summary of the chronologically-ordered comments preceding the current text under the same parent\n\nConversational Context:\n- Ancestors Summary:\n<<ANCESTRAL_CHAIN_SUMMARY>>\n- Preceding Peers Summary:\n<<PRECEEDING_PEERS_SUMMARY>>\n\nSummarize the provided conversational context in 1-3 sentences. Output just the summary and no other text. Start your response with 'The conversation so far...'.",
        )
    }

    /// One-sentence summary of a community's public self-description.
    pub fn community_purpose() -> PromptTemplate {
        PromptTemplate::new(
            COMMUNITY_PURPOSE,
            "Summarize the following description of the r/<<SUBREDDIT_NAME>> subreddit in 1 sentence. Do not hallucinate and do not say the text is too short to summarize. Output the summary and no other text.\n\n<<SUBREDDIT_PUBLIC_DESCRIPTION>>",
        )
    }

    /// One-sentence summary of a community's values and norms.
    pub fn community_values() -> PromptTemplate {
        PromptTemplate::new(
            COMMUNITY_VALUES,
            "Summarize key values or norms of the r/<<SUBREDDIT_NAME>> subreddit that are either explicitly stated or strongly evidenced by the following description and rules for the subreddit. Do not hallucinate. Output a 1 sentence summary and no other text.\n\nDescription:\n<<SUBREDDIT_DESCRIPTION_SUMMARY>>\nRules:\n<<SUBREDDIT_PUBLIC_RULES>>",
        )
    }

    /// Generates one contextually plausible templated inference.
    pub fn inference_generation() -> PromptTemplate {
        PromptTemplate::new(
            INFERENCE_GENERATION,
            "Your task is to use commonsense to generate one contextually plausible description of the <<TAXONOMY_DIMENSION>> in a social media conversation.\n\nGeneral (non-exhaustive) information to help scaffold your thinking about <<DIMENSION>> in the context of social media storytelling:\n<<DIMENSION_OVERVIEW>>\n\nThe following conversational context types are available:\n- Subreddit Name: the Reddit community where the conversation takes place\n- Subreddit Description: a brief overview of the subreddit topic\n- Subreddit Values: a high-level summary of key values, norms, or rules in the subreddit\n- Top-level Post Summary: a summary of the first, top-level post in the conversation thread\n- Conversation Summary: a summary of the prior conversation leading up to the current text\n- Current Text: the current text to analyze. The text necessarily contains storytelling (even if the story is short or banal).\n\nConversational Context:\n- Subreddit Name:\n<<SUBREDDIT_NAME>>\n- Subreddit Description:\n<<SUBREDDIT_DESCRIPTION>>\n- Subreddit Values:\n<<SUBREDDIT_VALUES>>\n- Top-level Post Summary:\n<<INITIAL_POST_SUMMARY>>\n- Conversation Summary:\n<<CONVERSATION_SUMMARY>>\n\nCurrent Text:\n<<CURRENT_TEXT>>\n\nOutput Instructions:\nRemember: Your task is to use commonsense to generate one contextually plausible description of the <<TAXONOMY_DIMENSION>> in a social media conversation.\nYou may use the provided info about <<DIM>> as background but do **not** force your response to fit it. You must not copy directly from the provided info if you can answer more precisely in your own words.\n\n**IMPORTANT RULES (READ CAREFULLY):**\n- ONLY edit inside double-braced placeholders like `{{...}}`. DO NOT MODIFY ANY TEXT OUTSIDE `{{}}`.\n- DO NOT change or correct the template\u{2019}s wording, punctuation, or singular/plural mismatches. FOLLOW THE TEMPLATE EXACTLY.\n- DO NOT modify the JSON structure. Use valid JSON with double quotes only.\n- OUTPUT ONLY the completed template below \u{2014} NO EXTRA TEXT, HEADINGS, OR COMMENTS.\n- IF YOU BREAK THESE RULES, THE OUTPUT WILL BE UNUSABLE.\n{\"response\": <<DIMENSION_TEMPLATE>>}",
        )
    }

    /// Variant that asks for a deliberately implausible inference, used
    /// to generate attention checks for human raters.
    pub fn inference_generation_implausible() -> PromptTemplate {
        PromptTemplate::new(
            INFERENCE_GENERATION_IMPLAUSIBLE,
            "Your task is to generate one contextually **implausible** description of the <<TAXONOMY_DIMENSION>> in a social media conversation.\n\nGeneral (non-exhaustive) information to help scaffold your thinking about <<DIMENSION>> in the context of social media storytelling:\n<<DIMENSION_OVERVIEW>>\n\nThe following conversational context types are available:\n- Subreddit Name: the Reddit community where the conversation takes place\n- Subreddit Description: a brief overview of the subreddit topic\n- Subreddit Values: a high-level summary of key values, norms, or rules in the subreddit\n- Top-level Post Summary: a summary of the first, top-level post in the conversation thread\n- Conversation Summary: a summary of the prior conversation leading up to the current text\n- Current Text: the current text to analyze. The text necessarily contains storytelling (even if the story is short or banal).\n\nConversational Context:\n- Subreddit Name:\n<<SUBREDDIT_NAME>>\n- Subreddit Description:\n<<SUBREDDIT_DESCRIPTION>>\n- Subreddit Values:\n<<SUBREDDIT_VALUES>>\n- Top-level Post Summary:\n<<INITIAL_POST_SUMMARY>>\n- Conversation Summary:\n<<CONVERSATION_SUMMARY>>\n\nCurrent Text:\n<<CURRENT_TEXT>>\n\nOutput Instructions:\nRemember: Your task is to generate one contextually **implausible** description of the <<TAXONOMY_DIMENSION>> in a social media conversation.\nYou may use the provided info about <<DIM>> as background but do **not** force your response to fit it. You must not copy directly from the provided info if you can answer more precisely in your own words.\nYour output will be used to test human annotators, to see if they correctly identify your response as implausible or extremely unlikely.\n\n**IMPORTANT RULES (READ CAREFULLY):**\n- ONLY edit inside double-braced placeholders like `{{...}}`. DO NOT MODIFY ANY TEXT OUTSIDE `{{}}`.\n- DO NOT change or correct the template\u{2019}s wording, punctuation, or singular/plural mismatches. FOLLOW THE TEMPLATE EXACTLY.\n- DO NOT modify the JSON structure. Use valid JSON with double quotes only.\n- OUTPUT ONLY the completed template below \u{2014} NO EXTRA TEXT, HEADINGS, OR COMMENTS.\n- IF YOU BREAK THESE RULES, THE OUTPUT WILL BE UNUSABLE.\n{\"response\": <<DIMENSION_TEMPLATE>>}",
        )
    }

    /// Multi-label classification of a templated inference, with k-shot
    /// examples. `TAXONOMY_ENTRIES` binds to "- label: definition"
    /// lines and `EXAMPLES` to rendered Input/Output pairs.
    pub fn inference_classification() -> PromptTemplate {
        PromptTemplate::new(
            INFERENCE_CLASSIFICATION,
            classification_body(true),
        )
    }

    /// Classification without the Examples section.
    pub fn inference_classification_zero_shot() -> PromptTemplate {
        PromptTemplate::new(
            INFERENCE_CLASSIFICATION_ZERO_SHOT,
            classification_body(false),
        )
    }

    fn classification_body(with_examples: bool) -> String {
        let examples = if with_examples {
            "Examples:\n<<EXAMPLES>>\n\n"
        } else {
            ""
        };
        format!(
            "Using the taxonomy and tips below, classify the following description of the <<DIMENSION>> in a social media conversation.\n\nTaxonomy for <<DIMENSION>>:\n<<TAXONOMY_ENTRIES>>\n\nClassification Tips for <<DIMENSION>>:\n<<DIMENSION_ANNOTATION_GUIDELINES>>\n\n{examples}Text to classify:\n<<TEXT_TO_CLASSIFY>>\n\nOutput Instructions:\nRemember: Using the taxonomy and tips below, classify the following description of the <<DIMENSION>> in a social media conversation.\nFill in the JSON list below with *ALL* of the categories that apply to the text. Many texts span multiple categories\u{2014}please include every one that applies, not just the most obvious.'\n\n**IMPORTANT RULES (READ CAREFULLY):**\n- DO NOT modify the JSON structure. Use valid JSON with double quotes only.\n- OUTPUT ONLY the completed template below \u{2014} NO EXTRA TEXT, HEADINGS, OR COMMENTS.\n{{\"response\": [\"category_a\", \"...\"]}}"
        )
    }
}
