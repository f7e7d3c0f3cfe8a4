//! Stimulus word sets.
//!
//! A stimulus file is JSON with a `type` of either `"weat"` (one comparison)
//! or `"balanced"` (a gender × topic design that expands into six
//! comparisons). See `docs/stimulus-format.md` for the schema.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weat::Labels;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSet {
    pub label: String,
    pub words: Vec<String>,
}

impl WordSet {
    pub fn new(label: impl Into<String>, words: &[&str]) -> Self {
        WordSet {
            label: label.into(),
            words: words.iter().map(|w| (*w).to_owned()).collect(),
        }
    }
}

/// One WEAT comparison: targets X, Y against attributes A, B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub language: String,
    pub name: String,
    #[serde(rename = "X")]
    pub x: WordSet,
    #[serde(rename = "Y")]
    pub y: WordSet,
    #[serde(rename = "A")]
    pub a: WordSet,
    #[serde(rename = "B")]
    pub b: WordSet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl StimulusSpec {
    pub fn validate(&self) -> Result<()> {
        let sets = [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)];
        for (name, set) in sets {
            if set.words.is_empty() {
                return Err(self.invalid(format!("set {name} is empty")));
            }
            if let Some(dup) = first_duplicate(&set.words) {
                return Err(self.invalid(format!("set {name} lists '{dup}' twice")));
            }
        }
        if self.x.words.len() != self.y.words.len() {
            return Err(self.invalid(format!(
                "unequal target sets: |X| = {}, |Y| = {}",
                self.x.words.len(),
                self.y.words.len()
            )));
        }
        for (p, q, set_p, set_q) in [("X", "Y", &self.x, &self.y), ("A", "B", &self.a, &self.b)] {
            let shared = intersection(&set_p.words, &set_q.words);
            if !shared.is_empty() {
                return Err(self.invalid(format!(
                    "{p} and {q} share words: {}",
                    shared.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Labels {
        Labels {
            x: self.x.label.clone(),
            y: self.y.label.clone(),
            a: self.a.label.clone(),
            b: self.b.label.clone(),
        }
    }

    /// Every word in the four sets, in set order.
    pub fn all_words(&self) -> impl Iterator<Item = &str> {
        [&self.x, &self.y, &self.a, &self.b]
            .into_iter()
            .flat_map(|s| s.words.iter().map(String::as_str))
    }

    fn invalid(&self, message: String) -> Error {
        Error::Invalid(format!("stimulus '{}': {message}", self.name))
    }
}

/// A 2 (grammatical gender) × 2 (topic) noun design plus object nouns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedDesign {
    pub language: String,
    pub name: String,
    pub male: WordSet,
    pub female: WordSet,
    pub masculine_career: Vec<String>,
    pub feminine_career: Vec<String>,
    pub masculine_family: Vec<String>,
    pub feminine_family: Vec<String>,
    #[serde(default)]
    pub masculine_objects: Vec<String>,
    #[serde(default)]
    pub feminine_objects: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl BalancedDesign {
    fn cells(&self) -> [(&'static str, &Vec<String>); 6] {
        [
            ("masculine_career", &self.masculine_career),
            ("feminine_career", &self.feminine_career),
            ("masculine_family", &self.masculine_family),
            ("feminine_family", &self.feminine_family),
            ("masculine_objects", &self.masculine_objects),
            ("feminine_objects", &self.feminine_objects),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Error::Invalid(format!("design '{}': {m}", self.name));
        if self.male.words.is_empty() || self.female.words.is_empty() {
            return Err(invalid("attribute sets must be non-empty".into()));
        }
        let shared = intersection(&self.male.words, &self.female.words);
        if !shared.is_empty() {
            return Err(invalid(format!("male and female share words: {}", shared.join(", "))));
        }
        let k = self.masculine_career.len();
        if k == 0 {
            return Err(invalid("gender × topic cells must be non-empty".into()));
        }
        for (name, cell) in &self.cells()[..4] {
            if cell.len() != k {
                return Err(invalid(format!(
                    "cell {name} has {} words, expected {k} like masculine_career",
                    cell.len()
                )));
            }
        }
        if self.masculine_objects.len() != self.feminine_objects.len() {
            return Err(invalid(format!(
                "object lists differ in size ({} masculine, {} feminine)",
                self.masculine_objects.len(),
                self.feminine_objects.len()
            )));
        }
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (name, cell) in self.cells() {
            for word in cell {
                if let Some(other) = owner.insert(word, name) {
                    return Err(invalid(format!("'{word}' appears in both {other} and {name}")));
                }
            }
        }
        Ok(())
    }

    /// The six comparisons of the design, in a fixed order: career vs family
    /// over all nouns, within masculine nouns and within feminine nouns, then
    /// masculine vs feminine over objects, career nouns and family nouns.
    /// The objects comparison is omitted (with a notice) when there are no
    /// object nouns.
    pub fn expand(&self) -> Result<Expansion> {
        self.validate()?;
        let join = |p: &[String], q: &[String]| -> Vec<String> { p.iter().chain(q).cloned().collect() };
        let spec = |suffix: &str, x_label: &str, x: Vec<String>, y_label: &str, y: Vec<String>| {
            let mut provenance = BTreeMap::new();
            provenance.insert("design".to_owned(), self.name.clone());
            for (key, text) in &self.provenance {
                provenance.insert(key.clone(), text.clone());
            }
            StimulusSpec {
                language: self.language.clone(),
                name: suffix.to_owned(),
                x: WordSet {
                    label: x_label.to_owned(),
                    words: x,
                },
                y: WordSet {
                    label: y_label.to_owned(),
                    words: y,
                },
                a: self.male.clone(),
                b: self.female.clone(),
                provenance,
            }
        };

        let mut specs = vec![
            spec(
                "career-family/all",
                "career",
                join(&self.masculine_career, &self.feminine_career),
                "family",
                join(&self.masculine_family, &self.feminine_family),
            ),
            spec(
                "career-family/masculine",
                "masculine career",
                self.masculine_career.clone(),
                "masculine family",
                self.masculine_family.clone(),
            ),
            spec(
                "career-family/feminine",
                "feminine career",
                self.feminine_career.clone(),
                "feminine family",
                self.feminine_family.clone(),
            ),
        ];
        let mut notices = Vec::new();
        if self.masculine_objects.is_empty() {
            notices.push(format!(
                "design '{}' has no object nouns; masculine-feminine/objects omitted",
                self.name
            ));
        } else {
            specs.push(spec(
                "masculine-feminine/objects",
                "masculine objects",
                self.masculine_objects.clone(),
                "feminine objects",
                self.feminine_objects.clone(),
            ));
        }
        specs.push(spec(
            "masculine-feminine/career",
            "masculine career",
            self.masculine_career.clone(),
            "feminine career",
            self.feminine_career.clone(),
        ));
        specs.push(spec(
            "masculine-feminine/family",
            "masculine family",
            self.masculine_family.clone(),
            "feminine family",
            self.feminine_family.clone(),
        ));
        for s in &specs {
            s.validate()?;
        }
        Ok(Expansion { specs, notices })
    }
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub specs: Vec<StimulusSpec>,
    pub notices: Vec<String>,
}

/// Contents of a stimulus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stimuli {
    Weat(StimulusSpec),
    Balanced(BalancedDesign),
}

impl Stimuli {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: StimulusFile = serde_json::from_str(text)
            .map_err(|e| Error::Invalid(format!("stimulus file schema violation: {e}")))?;
        let stimuli = match file.sets {
            Sets::Weat { x, y, a, b } => Stimuli::Weat(StimulusSpec {
                language: file.language,
                name: file.name,
                x,
                y,
                a,
                b,
                provenance: file.provenance,
            }),
            Sets::Balanced(sets) => Stimuli::Balanced(BalancedDesign {
                language: file.language,
                name: file.name,
                male: sets.male,
                female: sets.female,
                masculine_career: sets.masculine_career,
                feminine_career: sets.feminine_career,
                masculine_family: sets.masculine_family,
                feminine_family: sets.feminine_family,
                masculine_objects: sets.masculine_objects,
                feminine_objects: sets.feminine_objects,
                provenance: file.provenance,
            }),
        };
        match &stimuli {
            Stimuli::Weat(s) => s.validate()?,
            Stimuli::Balanced(d) => d.validate()?,
        }
        Ok(stimuli)
    }

    pub fn language(&self) -> &str {
        match self {
            Stimuli::Weat(s) => &s.language,
            Stimuli::Balanced(d) => &d.language,
        }
    }

    /// All comparisons this file describes.
    pub fn into_specs(self) -> Result<Expansion> {
        match self {
            Stimuli::Weat(s) => Ok(Expansion {
                specs: vec![s],
                notices: vec![],
            }),
            Stimuli::Balanced(d) => d.expand(),
        }
    }
}

/// Reads and validates a stimulus file.
pub fn load_stimuli(path: impl AsRef<Path>) -> Result<Stimuli> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Stimuli::from_json(&text).map_err(|e| match e {
        Error::Invalid(m) => Error::Invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Deserialize)]
struct StimulusFile {
    language: String,
    name: String,
    #[serde(flatten)]
    sets: Sets,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(tag = "type", content = "sets", rename_all = "lowercase")]
enum Sets {
    Weat {
        #[serde(rename = "X")]
        x: WordSet,
        #[serde(rename = "Y")]
        y: WordSet,
        #[serde(rename = "A")]
        a: WordSet,
        #[serde(rename = "B")]
        b: WordSet,
    },
    Balanced(BalancedSets),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BalancedSets {
    male: WordSet,
    female: WordSet,
    masculine_career: Vec<String>,
    feminine_career: Vec<String>,
    masculine_family: Vec<String>,
    feminine_family: Vec<String>,
    #[serde(default)]
    masculine_objects: Vec<String>,
    #[serde(default)]
    feminine_objects: Vec<String>,
}

fn first_duplicate(words: &[String]) -> Option<&str> {
    let mut seen = HashSet::new();
    words.iter().find(|w| !seen.insert(w.as_str())).map(String::as_str)
}

fn intersection(p: &[String], q: &[String]) -> Vec<String> {
    let q: HashSet<&str> = q.iter().map(String::as_str).collect();
    p.iter().filter(|w| q.contains(w.as_str())).cloned().collect()
}
