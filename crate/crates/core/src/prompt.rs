//! Prompt templates: the claim-verification instruction sent at inference
//! time and the span-verification prompt used for dataset generation.
//!
//! Slots are filled by concatenation, never by format-string substitution, so
//! braces or template-like text in user input pass through untouched.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kg::Triplet;

pub const VERIFICATION_INSTRUCTION: &str = r#"Analyze text against provided triplets, classifying claims as "Attributable", "Contradictory", or "Extrapolatory".
Justify your classification using the following structure:
- "text_span": Text under evaluation.
- "prediction": Category of the text (Attributable / Contradictory / Extrapolatory).
- "triplets": Relevant triplets (if any, else "NA").
- "rationale": Reason for classification.
For multiple claims, number each component (e.g., "text_span1", "prediction1",..). Use "NA" for inapplicable keys.
Example:
"text_span1": "Specific claim",
"prediction1": "Attributable/Contradictory/Extrapolatory",
"triplets1": "Relevant triplets",
"rationale1": "Prediction justification",
...
Input for analysis:
"#;

pub const DATAGEN_INSTRUCTION: &str = r#"**Text Span Attribution Verification**

**Objective:** Predict whether the text span is "Attributable", "Contradictory", or "Extrapolatory" based on the information provided in the triplets.

**Instructions:**

1. **Read the Full Text:**
- Understand the context and content of the full text string.

2. **Examine the Text Span:**
- Determine the claims made within the text span.

3. **Analyze the Triplets:**
- Evaluate if the triplets support, refute, or neither support nor refute the claims in the text span.

4. **Make Your Prediction:**
- Classify the text span as "Attributable", "Contradictory", or "Extrapolatory" based on your analysis of the triplets.

5. **Provide Rationale:**
- Clearly explain your reasoning for the classification.

**Classification Criteria:**

- **"Attributable"**: The text span is sufficiently supported by the triplet(s). All claims in the text span are directly present in the triplet information.
- **"Contradictory"**: The text span is conclusively refuted by the triplet(s). All claims in the text span are directly contradicted by the triplet information.
- **"Extrapolatory"**: The triplet(s) can neither support nor refute the text span. The information provided is either irrelevant, indirect, or related but not sufficient to support or refute the text span.

**Example:**

**Full Text:** "Albert Einstein is widely recognized as the father of modern physics. He was awarded the Nobel Prize in Physics for his services to Theoretical Physics."

**Text Span:** "He was awarded the Nobel Prize in Physics."

**Triplets:** [("Albert Einstein", "award received", "Nobel Prize in Physics")]

**Sample Evaluation:**
- **Prediction:** "Attributable"
- **Rationale:** "The triplet directly supports the claim that Albert Einstein received the Nobel Prize in Physics."

**Example:**

**Full Text:** "Isaac Newton discovered the element radium."

**Text Span:** "Isaac Newton discovered radium."

**Triplets:** [("Marie Curie", "discovered", "radium")]

**Sample Evaluation:**
- **Prediction:** "Contradictory"
- **Rationale:** "The triplet states that Marie Curie discovered radium, contradicting the claim that Isaac Newton discovered it."

**Example:**

**Full Text:** "The Eiffel Tower is a wrought-iron lattice tower that was opened in 1889."

**Text Span:** "The Eiffel Tower is a wrought-iron lattice tower that was opened in 1889."

**Triplets:** [("Eiffel Tower", "located in", "Paris")]

**Sample Evaluation:**
- **Prediction:** "Extrapolatory"
- **Rationale:** "The triplet states that the Eiffel Tower is located in Paris, which is related but not sufficient to confirm or refute that it was opened in 1889."

**Verification Checklist:**

- [ ] The prediction accurately reflects the relationship between the text span and the triplets.
- [ ] The rationale clearly explains the classification based on the triplets.
- [ ] The explanation is free from irrelevant information.

**Response Format:**
Provide your evaluation in the following JSON format:
- "prediction": "Attributable", "Contradictory", or "Extrapolatory"
- "rationale": "Your comments here"

**Inputs to Evaluate**

"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub rendered_input: String,
}

impl PromptBundle {
    /// The full prompt as sent to the model.
    pub fn text(&self) -> String {
        let mut s = String::with_capacity(self.instruction.len() + self.rendered_input.len());
        s.push_str(&self.instruction);
        s.push_str(&self.rendered_input);
        s
    }

    /// Hex SHA-256 of [`text`](Self::text); keys canned responses.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("text span is not a substring of the full text")]
    SpanNotInText,
}

/// Claim-verification prompt. Triplets are rendered `(s, p, o)` with labels,
/// one per line, in retrieval order.
pub fn build_verification_prompt(text: &str, triplets: &[Triplet]) -> PromptBundle {
    let mut input = String::new();
    input.push_str("-Text: ");
    input.push_str(text);
    input.push('\n');
    input.push_str("-Triplets: ");
    let lines: Vec<String> = triplets.iter().map(Triplet::render).collect();
    input.push_str(&lines.join("\n"));
    input.push('\n');
    PromptBundle { instruction: VERIFICATION_INSTRUCTION.to_string(), rendered_input: input }
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// `[("s", "p", "o"), ...]`, the list form the dataset prompt uses.
pub fn render_triplet_list(triplets: &[Triplet]) -> String {
    let items: Vec<String> = triplets
        .iter()
        .map(|t| format!("({}, {}, {})", quoted(&t.subject_label), quoted(&t.predicate), quoted(&t.object_label)))
        .collect();
    format!("[{}]", items.join(", "))
}

/// Span-verification prompt for dataset construction.
pub fn build_datagen_prompt(full_text: &str, text_span: &str, triplets: &[Triplet]) -> Result<PromptBundle, PromptError> {
    if !full_text.contains(text_span) {
        return Err(PromptError::SpanNotInText);
    }
    let mut input = String::new();
    input.push_str("**Full text:** \"");
    input.push_str(full_text);
    input.push_str("\"\n**Text span:** \"");
    input.push_str(text_span);
    input.push_str("\"\n**Triplets:** ");
    input.push_str(&render_triplet_list(triplets));
    input.push('\n');
    Ok(PromptBundle { instruction: DATAGEN_INSTRUCTION.to_string(), rendered_input: input })
}
