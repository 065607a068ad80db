use crate::error::{Error, Result};

/// Discrete stand-ins for text prompts. Ids are dense and never reordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionVocab {
    names: Vec<String>,
}

impl ConditionVocab {
    pub const NEUTRAL: usize = 0;
    pub const NON_TARGET: usize = 11;

    /// `"A number"`, `"A number 0"` .. `"A number 9"`, `"Not a number"`.
    pub fn digits() -> Self {
        let mut names = vec!["A number".to_string()];
        names.extend((0..10).map(|d| format!("A number {d}")));
        names.push("Not a number".to_string());
        ConditionVocab { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn digit(d: u8) -> usize {
        assert!(d < 10, "digit out of range: {d}");
        1 + d as usize
    }

    /// The digit a per-digit condition names, if any.
    pub fn digit_of(id: usize) -> Option<u8> {
        (1..=10).contains(&id).then(|| (id - 1) as u8)
    }

    pub fn id_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| {
                Error::Contract(format!(
                    "unknown condition '{name}'; vocabulary: {}",
                    self.names.join(", ")
                ))
            })
    }

    pub fn name(&self, id: usize) -> Result<&str> {
        self.check(id)?;
        Ok(&self.names[id])
    }

    pub fn check(&self, id: usize) -> Result<()> {
        if id < self.names.len() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "condition id {id} outside vocabulary of {}",
                self.names.len()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids() {
        let v = ConditionVocab::digits();
        assert_eq!(v.len(), 12);
        assert_eq!(v.id_of("A number").unwrap(), ConditionVocab::NEUTRAL);
        assert_eq!(v.id_of("Not a number").unwrap(), ConditionVocab::NON_TARGET);
        assert_eq!(v.id_of("A number 3").unwrap(), ConditionVocab::digit(3));
        assert_eq!(ConditionVocab::digit_of(ConditionVocab::digit(7)), Some(7));
        assert_eq!(ConditionVocab::digit_of(ConditionVocab::NEUTRAL), None);
        let err = v.id_of("A cat").unwrap_err().to_string();
        assert!(err.contains("Not a number"));
    }
}
