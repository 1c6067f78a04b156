//! Lexical data the interpreter consults: category synonyms and comparator orders.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Maps category aliases onto canonical names. Lookups are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable {
    canonical: BTreeMap<String, String>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self {
            canonical: BTreeMap::new(),
        }
    }

    pub fn new<I, A, C>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, C)>,
        A: AsRef<str>,
        C: AsRef<str>,
    {
        let canonical = pairs
            .into_iter()
            .map(|(alias, canon)| (fold(alias.as_ref()), fold(canon.as_ref())))
            .collect();
        Self { canonical }
    }

    pub fn normalize(&self, name: &str) -> String {
        let folded = fold(name);
        match self.canonical.get(&folded) {
            Some(canon) => canon.clone(),
            None => folded,
        }
    }

    pub fn same_category(&self, a: &str, b: &str) -> bool {
        self.normalize(a) == self.normalize(b)
    }
}

impl Default for SynonymTable {
    fn default() -> Self {
        Self::new([
            ("couch", "sofa"),
            ("tv", "television"),
            ("cellphone", "phone"),
            ("cell phone", "phone"),
            ("mobile phone", "phone"),
            ("doughnut", "donut"),
            ("aeroplane", "airplane"),
            ("bike", "bicycle"),
            ("motorbike", "motorcycle"),
            ("automobile", "car"),
            ("puppy", "dog"),
            ("kitten", "cat"),
        ])
    }
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// A comparative word resolves to a family order plus the direction it tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparator {
    pub family: String,
    /// `Greater` for "larger"-style words, `Less` for "smaller"-style words.
    pub wants: Ordering,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparatorTable {
    orders: BTreeMap<String, Vec<String>>,
    words: BTreeMap<String, Comparator>,
}

impl ComparatorTable {
    pub fn new(orders: BTreeMap<String, Vec<String>>, words: BTreeMap<String, Comparator>) -> Self {
        Self { orders, words }
    }

    pub fn order(&self, family: &str) -> Option<&[String]> {
        self.orders.get(&fold(family)).map(Vec::as_slice)
    }

    pub fn comparator(&self, word: &str) -> Option<&Comparator> {
        self.words.get(&fold(word))
    }

    /// Position of `value` in the family's ascending order.
    pub fn rank(&self, family: &str, value: &str) -> Option<usize> {
        let v = fold(value);
        self.order(family)?.iter().position(|x| *x == v)
    }

    pub fn orders(&self) -> &BTreeMap<String, Vec<String>> {
        &self.orders
    }

    pub fn words(&self) -> &BTreeMap<String, Comparator> {
        &self.words
    }
}

impl Default for ComparatorTable {
    fn default() -> Self {
        let order = |vals: &[&str]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>();
        let mut orders = BTreeMap::new();
        orders.insert("size".to_string(), order(&["tiny", "small", "medium", "large", "huge"]));
        orders.insert("length".to_string(), order(&["short", "long"]));
        orders.insert("height".to_string(), order(&["short", "tall"]));
        orders.insert("age".to_string(), order(&["young", "old"]));

        let mut words = BTreeMap::new();
        for (word, family, wants) in [
            ("larger", "size", Ordering::Greater),
            ("bigger", "size", Ordering::Greater),
            ("smaller", "size", Ordering::Less),
            ("longer", "length", Ordering::Greater),
            ("shorter", "length", Ordering::Less),
            ("taller", "height", Ordering::Greater),
            ("older", "age", Ordering::Greater),
            ("younger", "age", Ordering::Less),
        ] {
            words.insert(
                word.to_string(),
                Comparator {
                    family: family.to_string(),
                    wants,
                },
            );
        }
        Self { orders, words }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synonyms_fold_case_and_aliases() {
        let s = SynonymTable::default();
        assert_eq!(s.normalize("Couch"), "sofa");
        assert_eq!(s.normalize("cell  phone"), "phone");
        assert_eq!(s.normalize("table"), "table");
        assert!(s.same_category("couch", "sofa"));
    }

    #[test]
    fn size_order_ranks() {
        let t = ComparatorTable::default();
        assert!(t.rank("size", "small") < t.rank("size", "large"));
        assert_eq!(t.rank("size", "purple"), None);
        assert_eq!(t.comparator("Larger").unwrap().wants, Ordering::Greater);
    }
}
