//! Data-driven registry of the 10 perspective dimensions.
//!
//! Each dimension carries a slotted sentence template (`{{slot}}`
//! placeholders), a closed sublabel vocabulary, and a grouping into
//! author-centric and reader-centric dimensions. The registry ships as
//! JSON so the inventory can be edited or extended without a rebuild;
//! [`TaxonomyRegistry::builtin`] loads the copy embedded in the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Registry document format revision accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of dimensions a valid registry always carries.
pub const DIMENSION_COUNT: usize = 10;

/// Dimension ids that describe the author's own perspective; all other
/// dimensions describe reader responses.
pub const AUTHOR_CENTRIC_IDS: [&str; 3] =
    ["overall_goal", "narrative_intent", "author_emotional_response"];

static BUILTIN_REGISTRY_JSON: &str = include_str!("../assets/taxonomy.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionGroup {
    AuthorCentric,
    ReaderCentric,
}

impl fmt::Display for DimensionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimensionGroup::AuthorCentric => write!(f, "author_centric"),
            DimensionGroup::ReaderCentric => write!(f, "reader_centric"),
        }
    }
}

/// One entry of a dimension's closed label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sublabel {
    pub id: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// One perspective dimension: identity, template, and vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: String,
    pub display_name: String,
    pub description: String,
    pub group: DimensionGroup,
    /// Sentence template with `{{slot}}` placeholders.
    pub template: String,
    /// Slot names in template order.
    pub slots: Vec<String>,
    /// Classification rules shown to annotators and models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidelines: Option<String>,
    pub sublabels: Vec<Sublabel>,
}

impl Dimension {
    pub fn sublabel_ids(&self) -> Vec<&str> {
        self.sublabels.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn has_sublabel(&self, id: &str) -> bool {
        self.sublabels.iter().any(|s| s.id == id)
    }

    /// Number of template slots.
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn parsed_template(&self) -> Result<SlotTemplate, TaxonomyError> {
        SlotTemplate::parse(&self.template).map_err(|e| TaxonomyError::Invalid {
            violations: vec![format!("dimension {}: {e}", self.id)],
        })
    }
}

/// The full validated dimension inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaxonomyRegistry {
    pub schema_version: u32,
    pub dimensions: Vec<Dimension>,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to read registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed registry document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid registry: {}", violations.join("; "))]
    Invalid { violations: Vec<String> },
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown label(s) for dimension {dimension:?}: {}", labels.join(", "))]
    UnknownLabels {
        dimension: String,
        labels: Vec<String>,
    },
}

// Deserialization targets that defer enum and structural checks so a
// single load reports every violation at once.
#[derive(Deserialize)]
struct RawRegistry {
    schema_version: u32,
    dimensions: Vec<RawDimension>,
}

#[derive(Deserialize)]
struct RawDimension {
    id: String,
    display_name: String,
    description: String,
    group: String,
    template: String,
    slots: Vec<String>,
    #[serde(default)]
    guidelines: Option<String>,
    sublabels: Vec<Sublabel>,
}

impl TaxonomyRegistry {
    /// Loads and validates a registry from JSON text.
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let raw: RawRegistry = serde_json::from_str(text)?;
        Self::from_raw(raw)
    }

    /// Loads and validates a registry from a reader.
    pub fn load<R: Read>(mut reader: R) -> Result<Self, TaxonomyError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    /// The registry bundled with the crate.
    ///
    /// Its sublabel inventories and templates are authored defaults;
    /// deployments may substitute their own registry file.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_REGISTRY_JSON)
            .expect("bundled registry must validate; checked by tests")
    }

    fn from_raw(raw: RawRegistry) -> Result<Self, TaxonomyError> {
        let mut violations = Vec::new();
        if raw.schema_version != SCHEMA_VERSION {
            violations.push(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                raw.schema_version
            ));
        }
        if raw.dimensions.len() != DIMENSION_COUNT {
            violations.push(format!(
                "expected {DIMENSION_COUNT} dimensions, found {}",
                raw.dimensions.len()
            ));
        }

        let mut seen_ids = BTreeSet::new();
        let mut dimensions = Vec::new();
        for raw_dim in raw.dimensions {
            let id = raw_dim.id.clone();
            if !is_snake_case(&id) {
                violations.push(format!("dimension id {id:?} is not lowercase snake_case"));
            }
            if !seen_ids.insert(id.clone()) {
                violations.push(format!("duplicate dimension id {id:?}"));
            }
            if raw_dim.display_name.is_empty() {
                violations.push(format!("dimension {id}: empty display_name"));
            }
            if raw_dim.description.is_empty() {
                violations.push(format!("dimension {id}: empty description"));
            }

            let group = match raw_dim.group.as_str() {
                "author_centric" => Some(DimensionGroup::AuthorCentric),
                "reader_centric" => Some(DimensionGroup::ReaderCentric),
                other => {
                    violations.push(format!("dimension {id}: unknown group {other:?}"));
                    None
                }
            };
            if let Some(group) = group {
                let expected = if AUTHOR_CENTRIC_IDS.contains(&id.as_str()) {
                    DimensionGroup::AuthorCentric
                } else {
                    DimensionGroup::ReaderCentric
                };
                if group != expected {
                    violations.push(format!("dimension {id}: group must be {expected}"));
                }
            }

            if raw_dim.slots.is_empty() {
                violations.push(format!("dimension {id}: no slots declared"));
            }
            let mut slot_set = BTreeSet::new();
            for slot in &raw_dim.slots {
                if !is_snake_case(slot) {
                    violations.push(format!(
                        "dimension {id}: slot {slot:?} is not lowercase snake_case"
                    ));
                }
                if !slot_set.insert(slot.clone()) {
                    violations.push(format!("dimension {id}: duplicate slot {slot:?}"));
                }
            }
            match SlotTemplate::parse(&raw_dim.template) {
                Ok(parsed) => {
                    let in_template: Vec<&str> = parsed.slot_names().collect();
                    let declared: Vec<&str> = raw_dim.slots.iter().map(|s| s.as_str()).collect();
                    if in_template != declared {
                        violations.push(format!(
                            "dimension {id}: declared slots {declared:?} do not match template slots {in_template:?}"
                        ));
                    }
                }
                Err(e) => violations.push(format!("dimension {id}: {e}")),
            }

            if raw_dim.sublabels.is_empty() {
                violations.push(format!("dimension {id}: no sublabels"));
            }
            let mut label_set = BTreeSet::new();
            for sublabel in &raw_dim.sublabels {
                if !is_snake_case(&sublabel.id) {
                    violations.push(format!(
                        "dimension {id}: sublabel id {:?} is not lowercase snake_case",
                        sublabel.id
                    ));
                }
                if !label_set.insert(sublabel.id.clone()) {
                    violations.push(format!(
                        "dimension {id}: duplicate sublabel id {:?}",
                        sublabel.id
                    ));
                }
                if sublabel.definition.is_empty() {
                    violations.push(format!(
                        "dimension {id}: sublabel {} has empty definition",
                        sublabel.id
                    ));
                }
            }

            dimensions.push(Dimension {
                id,
                display_name: raw_dim.display_name,
                description: raw_dim.description,
                group: group.unwrap_or(DimensionGroup::ReaderCentric),
                template: raw_dim.template,
                slots: raw_dim.slots,
                guidelines: raw_dim.guidelines,
                sublabels: raw_dim.sublabels,
            });
        }

        if violations.is_empty() {
            Ok(TaxonomyRegistry {
                schema_version: raw.schema_version,
                dimensions,
            })
        } else {
            Err(TaxonomyError::Invalid { violations })
        }
    }

    pub fn dimension(&self, id: &str) -> Result<&Dimension, TaxonomyError> {
        self.dimensions
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| TaxonomyError::UnknownDimension(id.to_string()))
    }

    /// Dimension ids in registry order.
    pub fn dimension_ids(&self) -> Vec<&str> {
        self.dimensions.iter().map(|d| d.id.as_str()).collect()
    }

    pub fn dimensions_in_group(&self, group: DimensionGroup) -> Vec<&Dimension> {
        self.dimensions.iter().filter(|d| d.group == group).collect()
    }

    /// Checks that every label belongs to the dimension's vocabulary.
    /// An empty label set is valid.
    pub fn validate_labels<S: AsRef<str>>(
        &self,
        dimension_id: &str,
        labels: &[S],
    ) -> Result<(), TaxonomyError> {
        let dimension = self.dimension(dimension_id)?;
        let mut unknown: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref())
            .filter(|l| !dimension.has_sublabel(l))
            .map(|l| l.to_string())
            .collect();
        unknown.sort();
        unknown.dedup();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(TaxonomyError::UnknownLabels {
                dimension: dimension_id.to_string(),
                labels: unknown,
            })
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes infallibly")
    }
}

fn is_snake_case(s: &str) -> bool {
    !s.is_empty()
        && s.starts_with(|c: char| c.is_ascii_lowercase())
        && !s.ends_with('_')
        && !s.contains("__")
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// A parsed `{{slot}}` template: alternating fixed text and slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTemplate {
    parts: Vec<TemplatePart>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplatePart {
    Fixed(String),
    Slot(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateParseError {
    #[error("template has '{{{{' without matching '}}}}'")]
    Unclosed,
    #[error("template has '}}}}' without matching '{{{{'")]
    Unopened,
    #[error("template slot name {0:?} is not lowercase snake_case")]
    BadSlotName(String),
    #[error("template slot {0:?} appears more than once")]
    RepeatedSlot(String),
    #[error("template has no slots")]
    NoSlots,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("no value for slot {0:?}")]
    MissingSlot(String),
    #[error("empty value for slot {0:?}")]
    EmptySlot(String),
    #[error("value supplied for unknown slot {0:?}")]
    UnknownSlot(String),
}

impl SlotTemplate {
    /// Splits a template into fixed segments and slot names. Every slot
    /// must be named in lowercase snake_case and appear exactly once.
    pub fn parse(template: &str) -> Result<Self, TemplateParseError> {
        let mut parts = Vec::new();
        let mut fixed = String::new();
        let mut rest = template;
        let mut seen = BTreeSet::new();
        loop {
            match rest.find("{{") {
                None => {
                    if rest.contains("}}") {
                        return Err(TemplateParseError::Unopened);
                    }
                    fixed.push_str(rest);
                    break;
                }
                Some(open) => {
                    let before = &rest[..open];
                    if before.contains("}}") {
                        return Err(TemplateParseError::Unopened);
                    }
                    fixed.push_str(before);
                    let after_open = &rest[open + 2..];
                    let close = after_open.find("}}").ok_or(TemplateParseError::Unclosed)?;
                    let name = &after_open[..close];
                    if !is_snake_case(name) {
                        return Err(TemplateParseError::BadSlotName(name.to_string()));
                    }
                    if !seen.insert(name.to_string()) {
                        return Err(TemplateParseError::RepeatedSlot(name.to_string()));
                    }
                    parts.push(TemplatePart::Fixed(std::mem::take(&mut fixed)));
                    parts.push(TemplatePart::Slot(name.to_string()));
                    rest = &after_open[close + 2..];
                }
            }
        }
        parts.push(TemplatePart::Fixed(fixed));
        if seen.is_empty() {
            return Err(TemplateParseError::NoSlots);
        }
        Ok(SlotTemplate { parts })
    }

    pub fn parts(&self) -> &[TemplatePart] {
        &self.parts
    }

    /// Slot names in template order.
    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            TemplatePart::Slot(name) => Some(name.as_str()),
            TemplatePart::Fixed(_) => None,
        })
    }

    /// Fixed segments in order; always one more than there are slots.
    pub fn fixed_segments(&self) -> Vec<&str> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                TemplatePart::Fixed(text) => Some(text.as_str()),
                TemplatePart::Slot(_) => None,
            })
            .collect()
    }

    /// Substitutes every slot with its non-empty value.
    pub fn render(
        &self,
        values: &std::collections::BTreeMap<String, String>,
    ) -> Result<String, RenderError> {
        let names: BTreeSet<&str> = self.slot_names().collect();
        for key in values.keys() {
            if !names.contains(key.as_str()) {
                return Err(RenderError::UnknownSlot(key.clone()));
            }
        }
        let mut out = String::new();
        for part in &self.parts {
            match part {
                TemplatePart::Fixed(text) => out.push_str(text),
                TemplatePart::Slot(name) => {
                    let value = values
                        .get(name)
                        .ok_or_else(|| RenderError::MissingSlot(name.clone()))?;
                    if value.is_empty() {
                        return Err(RenderError::EmptySlot(name.clone()));
                    }
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn builtin_registry_validates() {
        let registry = TaxonomyRegistry::builtin();
        assert_eq!(registry.schema_version, SCHEMA_VERSION);
        assert_eq!(registry.dimensions.len(), 10);
        let author_centric = registry.dimensions_in_group(DimensionGroup::AuthorCentric);
        let ids: Vec<&str> = author_centric.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(
            ids,
            vec!["overall_goal", "narrative_intent", "author_emotional_response"]
        );
        assert_eq!(
            registry.dimensions_in_group(DimensionGroup::ReaderCentric).len(),
            7
        );
    }

    #[test]
    fn builtin_vocabularies_match_published_sets() {
        let registry = TaxonomyRegistry::builtin();
        assert_eq!(
            registry.dimension("stance").unwrap().sublabel_ids(),
            vec!["support_belief_norm", "counter_belief_norm", "neutral_belief_norm"]
        );
        let mut moral = registry.dimension("moral").unwrap().sublabel_ids();
        moral.sort();
        assert_eq!(
            moral,
            vec![
                "achievement",
                "benevolence",
                "conformity",
                "hedonism",
                "power",
                "security",
                "self_direction",
                "stimulation",
                "tradition",
                "universalism",
            ]
        );
        let mut emotions = registry
            .dimension("author_emotional_response")
            .unwrap()
            .sublabel_ids();
        emotions.sort();
        let expected = vec![
            "anger",
            "appreciation",
            "compassion",
            "connection",
            "disgust",
            "fear",
            "guilt",
            "hope",
            "joy",
            "pride",
            "relief",
            "sadness",
        ];
        assert_eq!(emotions, expected);
        let mut feelings = registry.dimension("narrative_feeling").unwrap().sublabel_ids();
        feelings.sort();
        assert_eq!(feelings, expected);
    }

    #[test]
    fn builtin_templates_parse_with_declared_slots() {
        let registry = TaxonomyRegistry::builtin();
        for dim in &registry.dimensions {
            let parsed = dim.parsed_template().unwrap();
            let slots: Vec<&str> = parsed.slot_names().collect();
            let declared: Vec<&str> = dim.slots.iter().map(|s| s.as_str()).collect();
            assert_eq!(slots, declared, "dimension {}", dim.id);
        }
    }

    #[test]
    fn registry_round_trips() {
        let registry = TaxonomyRegistry::builtin();
        let reloaded = TaxonomyRegistry::from_json(&registry.to_json_pretty()).unwrap();
        assert_eq!(registry, reloaded);
    }

    #[test]
    fn label_validation_accepts_known_and_empty_sets() {
        let registry = TaxonomyRegistry::builtin();
        registry
            .validate_labels("stance", &["support_belief_norm"])
            .unwrap();
        registry.validate_labels::<&str>("stance", &[]).unwrap();
        let err = registry.validate_labels("stance", &["joy"]).unwrap_err();
        match err {
            TaxonomyError::UnknownLabels { dimension, labels } => {
                assert_eq!(dimension, "stance");
                assert_eq!(labels, vec!["joy"]);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(
            registry.validate_labels("no_such_dim", &["x"]),
            Err(TaxonomyError::UnknownDimension(_))
        ));
    }

    #[test]
    fn wrong_cardinality_is_rejected() {
        let registry = TaxonomyRegistry::builtin();
        let mut doc: serde_json::Value =
            serde_json::from_str(&registry.to_json_pretty()).unwrap();
        doc["dimensions"].as_array_mut().unwrap().pop();
        let err = TaxonomyRegistry::from_json(&doc.to_string()).unwrap_err();
        match err {
            TaxonomyError::Invalid { violations } => {
                assert!(violations.iter().any(|v| v.contains("expected 10 dimensions")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported_together() {
        let registry = TaxonomyRegistry::builtin();
        let mut doc: serde_json::Value =
            serde_json::from_str(&registry.to_json_pretty()).unwrap();
        let dims = doc["dimensions"].as_array_mut().unwrap();
        dims[0]["group"] = "sideways".into();
        dims[1]["sublabels"][0]["id"] = "Not_Snake".into();
        dims[2]["template"] = "no slots here".into();
        let err = TaxonomyRegistry::from_json(&doc.to_string()).unwrap_err();
        match err {
            TaxonomyError::Invalid { violations } => {
                assert!(violations.iter().any(|v| v.contains("unknown group")));
                assert!(violations.iter().any(|v| v.contains("Not_Snake")));
                assert!(violations.iter().any(|v| v.contains("no slots")));
                assert!(violations.len() >= 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn group_assignment_is_enforced() {
        let registry = TaxonomyRegistry::builtin();
        let mut doc: serde_json::Value =
            serde_json::from_str(&registry.to_json_pretty()).unwrap();
        doc["dimensions"][0]["group"] = "reader_centric".into();
        let err = TaxonomyRegistry::from_json(&doc.to_string()).unwrap_err();
        match err {
            TaxonomyError::Invalid { violations } => {
                assert!(violations
                    .iter()
                    .any(|v| v.contains("overall_goal") && v.contains("author_centric")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn template_parsing_splits_fixed_and_slots() {
        let t = SlotTemplate::parse("ab {{x}} cd {{y}}.").unwrap();
        assert_eq!(t.fixed_segments(), vec!["ab ", " cd ", "."]);
        let slots: Vec<&str> = t.slot_names().collect();
        assert_eq!(slots, vec!["x", "y"]);

        assert_eq!(
            SlotTemplate::parse("a {{x"),
            Err(TemplateParseError::Unclosed)
        );
        assert_eq!(
            SlotTemplate::parse("a x}} b"),
            Err(TemplateParseError::Unopened)
        );
        assert_eq!(
            SlotTemplate::parse("{{x}} and {{x}}"),
            Err(TemplateParseError::RepeatedSlot("x".to_string()))
        );
        assert_eq!(
            SlotTemplate::parse("{{Bad Name}}"),
            Err(TemplateParseError::BadSlotName("Bad Name".to_string()))
        );
        assert_eq!(SlotTemplate::parse("plain"), Err(TemplateParseError::NoSlots));
    }

    #[test]
    fn render_fills_every_slot_or_fails() {
        let t = SlotTemplate::parse("start {{a}} mid {{b}} end").unwrap();
        let mut values = BTreeMap::new();
        values.insert("a".to_string(), "one".to_string());
        values.insert("b".to_string(), "two".to_string());
        assert_eq!(t.render(&values).unwrap(), "start one mid two end");

        let mut missing = values.clone();
        missing.remove("b");
        assert_eq!(
            t.render(&missing),
            Err(RenderError::MissingSlot("b".to_string()))
        );

        let mut empty = values.clone();
        empty.insert("b".to_string(), String::new());
        assert_eq!(t.render(&empty), Err(RenderError::EmptySlot("b".to_string())));

        let mut extra = values.clone();
        extra.insert("zz".to_string(), "x".to_string());
        assert_eq!(
            t.render(&extra),
            Err(RenderError::UnknownSlot("zz".to_string()))
        );
    }
}
