//! External code tables: ICD-9 to ICD-10 equivalences (GEM), DRG grouping,
//! Elixhauser categories and code embeddings.
//!
//! Every table is a headered CSV. Leading `# key: value` comment lines carry
//! provenance (`# source:`, `# version:`) and table parameters
//! (`# dimension:` for embeddings, `# categories:` for Elixhauser maps).
//! A table either loads completely or fails with the offending line number.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::model::{CodeKind, Icd9Code};

pub const UNGROUPED: &str = "UNGROUPED";

pub const GEM_FILE: &str = "gem.csv";
pub const DRG_FILE: &str = "drg.csv";
pub const ELIXHAUSER_FILE: &str = "elixhauser.csv";
pub const DX_EMBEDDING_FILE: &str = "dx_embeddings.csv";
pub const PX_EMBEDDING_FILE: &str = "px_embeddings.csv";

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{table}: line {line}: {message}")]
    Format { table: String, line: usize, message: String },
    #[error("{table}: line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { table: String, line: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Gem,
    Drg,
    Elixhauser,
    DiagnosisEmbedding,
    ProcedureEmbedding,
}

impl TableKind {
    fn header(self) -> &'static [&'static str] {
        match self {
            TableKind::Gem => &["icd9", "icd10"],
            TableKind::Drg => &["icd9", "drg"],
            TableKind::Elixhauser => &["prefix", "category", "weight"],
            TableKind::DiagnosisEmbedding | TableKind::ProcedureEmbedding => &["code"],
        }
    }
}

/// Comment-line metadata of a table file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TableProvenance {
    pub source: Option<String>,
    pub version: Option<String>,
    pub params: BTreeMap<String, String>,
}

impl TableProvenance {
    fn render(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.source {
            let _ = writeln!(out, "# source: {s}");
        }
        if let Some(v) = &self.version {
            let _ = writeln!(out, "# version: {v}");
        }
        for (k, v) in &self.params {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out
    }
}

/// A code-to-value table. GEM tables may list several values per key, kept
/// in file order; DRG tables hold exactly one.
#[derive(Debug, Clone)]
pub struct MapTable {
    pub name: String,
    pub key_kind: CodeKind,
    entries: Vec<(Icd9Code, Vec<String>)>,
    index: HashMap<Icd9Code, usize>,
    pub provenance: TableProvenance,
}

impl MapTable {
    pub fn new(name: impl Into<String>, key_kind: CodeKind, provenance: TableProvenance) -> Self {
        Self { name: name.into(), key_kind, entries: Vec::new(), index: HashMap::new(), provenance }
    }

    /// Appends a value for `key`; returns false if the pair was already present.
    pub fn insert(&mut self, key: Icd9Code, value: impl Into<String>) -> bool {
        let value = value.into();
        match self.index.get(&key) {
            Some(&i) => {
                if self.entries[i].1.contains(&value) {
                    return false;
                }
                self.entries[i].1.push(value);
            }
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, vec![value]));
            }
        }
        true
    }

    pub fn values(&self, key: &Icd9Code) -> &[String] {
        self.index.get(key).map(|&i| self.entries[i].1.as_slice()).unwrap_or(&[])
    }

    pub fn first(&self, key: &Icd9Code) -> Option<&str> {
        self.values(key).first().map(String::as_str)
    }

    /// Number of distinct keys.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self, header: [&str; 2]) -> String {
        let mut out = self.provenance.render();
        let _ = writeln!(out, "{},{}", header[0], header[1]);
        for (k, vs) in &self.entries {
            for v in vs {
                let _ = writeln!(out, "{k},{v}");
            }
        }
        out
    }
}

/// Elixhauser category map keyed by code prefix.
#[derive(Debug, Clone)]
pub struct ElixhauserMap {
    entries: HashMap<String, (String, i32)>,
    order: Vec<String>,
    categories: Vec<String>,
    pub provenance: TableProvenance,
}

impl ElixhauserMap {
    pub fn new(categories: Vec<String>, provenance: TableProvenance) -> Self {
        Self { entries: HashMap::new(), order: Vec::new(), categories, provenance }
    }

    /// Adds a prefix row. Fails on duplicate prefixes and undeclared categories.
    pub fn insert(&mut self, prefix: &Icd9Code, category: &str, weight: i32) -> Result<(), String> {
        if !self.categories.iter().any(|c| c == category) {
            return Err(format!("category {category:?} not declared in `# categories:`"));
        }
        let key = prefix.to_string();
        if self.entries.contains_key(&key) {
            return Err(format!("duplicate prefix {key}"));
        }
        self.order.push(key.clone());
        self.entries.insert(key, (category.to_string(), weight));
        Ok(())
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Category and weight of the longest matching prefix.
    pub fn lookup(&self, code: &Icd9Code) -> Option<(&str, i32)> {
        code.prefixes()
            .find_map(|p| self.entries.get(&p))
            .map(|(c, w)| (c.as_str(), *w))
    }

    pub fn to_csv(&self) -> String {
        let mut prov = self.provenance.clone();
        prov.params.insert("categories".into(), self.categories.join(","));
        let mut out = prov.render();
        out.push_str("prefix,category,weight\n");
        for p in &self.order {
            let (c, w) = &self.entries[p];
            let _ = writeln!(out, "{p},{c},{w}");
        }
        out
    }
}

/// Fixed-dimension code vectors. Keys are code text as written in the file
/// (ICD-10 for diagnosis tables reached through a GEM, ICD-9 otherwise).
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub kind: CodeKind,
    dimension: usize,
    rows: HashMap<String, Vec<f64>>,
    order: Vec<String>,
    pub provenance: TableProvenance,
}

impl EmbeddingTable {
    pub fn default_dimension(kind: CodeKind) -> usize {
        match kind {
            CodeKind::Diagnosis => 100,
            CodeKind::Procedure => 300,
        }
    }

    pub fn new(kind: CodeKind, dimension: usize, provenance: TableProvenance) -> Self {
        Self { kind, dimension, rows: HashMap::new(), order: Vec::new(), provenance }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<(), String> {
        let key = key.into();
        if vector.len() != self.dimension {
            return Err(format!("expected {} components, found {}", self.dimension, vector.len()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err("non-finite component".into());
        }
        if self.rows.contains_key(&key) {
            return Err(format!("duplicate code {key}"));
        }
        self.order.push(key.clone());
        self.rows.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn to_csv(&self) -> String {
        let mut prov = self.provenance.clone();
        prov.params.insert("dimension".into(), self.dimension.to_string());
        let mut out = prov.render();
        out.push_str("code");
        for i in 1..=self.dimension {
            let _ = write!(out, ",v{i}");
        }
        out.push('\n');
        for k in &self.order {
            out.push_str(k);
            for v in &self.rows[k] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum LoadedTable {
    Map(MapTable),
    Elixhauser(ElixhauserMap),
    Embedding(EmbeddingTable),
}

/// Loads a table file of the given kind.
pub fn load_map_table(path: &Path, kind: TableKind) -> Result<LoadedTable, MapError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| MapError::Io { path: path.to_path_buf(), source })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    parse_map_table(&name, &text, kind)
}

/// Parses table text; `name` is only used in error messages.
pub fn parse_map_table(name: &str, text: &str, kind: TableKind) -> Result<LoadedTable, MapError> {
    let ferr = |line: usize, message: String| MapError::Format { table: name.to_string(), line, message };

    let mut provenance = TableProvenance::default();
    for line in text.lines() {
        let Some(rest) = line.trim_start().strip_prefix('#') else { continue };
        if let Some((k, v)) = rest.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            match k.as_str() {
                "source" => provenance.source = Some(v),
                "version" => provenance.version = Some(v),
                _ => {
                    provenance.params.insert(k, v);
                }
            }
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(ferr(csv_line(&e), e.to_string())),
        None => return Err(ferr(1, "missing header".into())),
    };
    let header_line = header.position().map(|p| p.line() as usize).unwrap_or(1);
    let expected = kind.header();
    let header_ok = match kind {
        TableKind::DiagnosisEmbedding | TableKind::ProcedureEmbedding => {
            header.get(0) == Some("code")
        }
        _ => header.len() == expected.len() && header.iter().zip(expected).all(|(a, b)| a == *b),
    };
    if !header_ok {
        return Err(ferr(header_line, format!("header must start with `{}`", expected.join(","))));
    }

    let key_kind = match kind {
        TableKind::ProcedureEmbedding => CodeKind::Procedure,
        _ => CodeKind::Diagnosis,
    };
    let parse_key = |line: usize, text: &str| {
        Icd9Code::parse(text, key_kind).map_err(|e| ferr(line, e.to_string()))
    };

    match kind {
        TableKind::Gem | TableKind::Drg => {
            let mut table = MapTable::new(name, key_kind, provenance);
            for row in rows {
                let row = row.map_err(|e| ferr(csv_line(&e), e.to_string()))?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                if row.len() != 2 || row[1].is_empty() {
                    return Err(ferr(line, format!("expected 2 non-empty fields, found {}", row.len())));
                }
                let key = parse_key(line, &row[0])?;
                if kind == TableKind::Drg && !table.values(&key).is_empty() {
                    return Err(ferr(line, format!("duplicate key {key}")));
                }
                if kind == TableKind::Gem && !valid_icd10(&row[1]) {
                    return Err(ferr(line, format!("malformed ICD-10 code {:?}", &row[1])));
                }
                if !table.insert(key.clone(), &row[1]) {
                    return Err(ferr(line, format!("duplicate row {key},{}", &row[1])));
                }
            }
            Ok(LoadedTable::Map(table))
        }
        TableKind::Elixhauser => {
            let declared = provenance
                .params
                .get("categories")
                .ok_or_else(|| ferr(1, "missing `# categories:` declaration".into()))?;
            let categories: Vec<String> = declared
                .split(',')
                .map(|c| c.trim().to_string())
                .filter(|c| !c.is_empty())
                .collect();
            let mut map = ElixhauserMap::new(categories, provenance.clone());
            for row in rows {
                let row = row.map_err(|e| ferr(csv_line(&e), e.to_string()))?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                if row.len() != 3 {
                    return Err(ferr(line, format!("expected 3 fields, found {}", row.len())));
                }
                let prefix = parse_key(line, &row[0])?;
                let weight: i32 =
                    row[2].parse().map_err(|_| ferr(line, format!("bad weight {:?}", &row[2])))?;
                map.insert(&prefix, &row[1], weight).map_err(|m| ferr(line, m))?;
            }
            Ok(LoadedTable::Elixhauser(map))
        }
        TableKind::DiagnosisEmbedding | TableKind::ProcedureEmbedding => {
            let dimension = match provenance.params.get("dimension") {
                Some(d) => d
                    .parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| ferr(1, format!("bad dimension {d:?}")))?,
                None => EmbeddingTable::default_dimension(key_kind),
            };
            if header.len() != dimension + 1 {
                return Err(MapError::DimensionMismatch {
                    table: name.to_string(),
                    line: header_line,
                    expected: dimension,
                    found: header.len() - 1,
                });
            }
            let mut table = EmbeddingTable::new(key_kind, dimension, provenance);
            for row in rows {
                let row = row.map_err(|e| ferr(csv_line(&e), e.to_string()))?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                if row.len() != dimension + 1 {
                    return Err(MapError::DimensionMismatch {
                        table: name.to_string(),
                        line,
                        expected: dimension,
                        found: row.len().saturating_sub(1),
                    });
                }
                let key = &row[0];
                if key.is_empty() || !key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.') {
                    return Err(ferr(line, format!("malformed code {key:?}")));
                }
                let vector = row
                    .iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| ferr(line, "non-numeric component".into()))?;
                table.insert(key, vector).map_err(|m| ferr(line, m))?;
            }
            Ok(LoadedTable::Embedding(table))
        }
    }
}

fn csv_line(e: &csv::Error) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn valid_icd10(text: &str) -> bool {
    let b = text.as_bytes();
    b.len() >= 3
        && b[0].is_ascii_alphabetic()
        && b.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'.')
}

/// Single ICD-10 equivalent; the first listed when the table has several.
pub fn map_icd9_to_icd10<'a>(code: &Icd9Code, gem: &'a MapTable) -> Option<&'a str> {
    gem.first(code)
}

pub fn drg_group_of<'a>(code: &Icd9Code, drg: &'a MapTable) -> &'a str {
    drg.first(code).unwrap_or(UNGROUPED)
}

/// Stored vector, or a zero vector with `found = false`.
pub fn lookup_embedding(code: &Icd9Code, table: &EmbeddingTable) -> (Vec<f64>, bool) {
    lookup_embedding_key(&code.to_string(), table)
}

pub fn lookup_embedding_key(key: &str, table: &EmbeddingTable) -> (Vec<f64>, bool) {
    match table.get(key) {
        Some(v) => (v.to_vec(), true),
        None => (vec![0.0; table.dimension()], false),
    }
}

/// The tables a pipeline run needs. Any of them may be absent.
#[derive(Debug, Clone, Default)]
pub struct CodeMapSet {
    pub gem: Option<MapTable>,
    pub drg: Option<MapTable>,
    pub elixhauser: Option<ElixhauserMap>,
    pub dx_embeddings: Option<EmbeddingTable>,
    pub px_embeddings: Option<EmbeddingTable>,
}

impl CodeMapSet {
    /// Loads whichever of the standard file names exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, MapError> {
        if !dir.is_dir() {
            return Err(MapError::Io {
                path: dir.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            });
        }
        let load = |file: &str, kind| -> Result<Option<LoadedTable>, MapError> {
            let path = dir.join(file);
            if path.exists() {
                load_map_table(&path, kind).map(Some)
            } else {
                Ok(None)
            }
        };
        let map = |t: Option<LoadedTable>| match t {
            Some(LoadedTable::Map(m)) => Some(m),
            _ => None,
        };
        let emb = |t: Option<LoadedTable>| match t {
            Some(LoadedTable::Embedding(e)) => Some(e),
            _ => None,
        };
        Ok(Self {
            gem: map(load(GEM_FILE, TableKind::Gem)?),
            drg: map(load(DRG_FILE, TableKind::Drg)?),
            elixhauser: match load(ELIXHAUSER_FILE, TableKind::Elixhauser)? {
                Some(LoadedTable::Elixhauser(e)) => Some(e),
                _ => None,
            },
            dx_embeddings: emb(load(DX_EMBEDDING_FILE, TableKind::DiagnosisEmbedding)?),
            px_embeddings: emb(load(PX_EMBEDDING_FILE, TableKind::ProcedureEmbedding)?),
        })
    }

    /// Writes every present table under its standard file name.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        if let Some(t) = &self.gem {
            std::fs::write(dir.join(GEM_FILE), t.to_csv(["icd9", "icd10"]))?;
        }
        if let Some(t) = &self.drg {
            std::fs::write(dir.join(DRG_FILE), t.to_csv(["icd9", "drg"]))?;
        }
        if let Some(t) = &self.elixhauser {
            std::fs::write(dir.join(ELIXHAUSER_FILE), t.to_csv())?;
        }
        if let Some(t) = &self.dx_embeddings {
            std::fs::write(dir.join(DX_EMBEDDING_FILE), t.to_csv())?;
        }
        if let Some(t) = &self.px_embeddings {
            std::fs::write(dir.join(PX_EMBEDDING_FILE), t.to_csv())?;
        }
        Ok(())
    }

    pub fn drg_group<'a>(&'a self, code: &Icd9Code) -> &'a str {
        self.drg.as_ref().map(|d| drg_group_of(code, d)).unwrap_or(UNGROUPED)
    }

    /// Diagnosis embedding, reached through the GEM when one is loaded.
    /// Falls back to the ICD-9 text as key.
    pub fn diagnosis_embedding(&self, code: &Icd9Code) -> Option<(Vec<f64>, bool)> {
        let table = self.dx_embeddings.as_ref()?;
        if let Some(icd10) = self.gem.as_ref().and_then(|g| map_icd9_to_icd10(code, g)) {
            if let Some(v) = table.get(icd10) {
                return Some((v.to_vec(), true));
            }
        }
        Some(lookup_embedding(code, table))
    }

    pub fn procedure_embedding(&self, code: Option<&Icd9Code>) -> Option<(Vec<f64>, bool)> {
        let table = self.px_embeddings.as_ref()?;
        Some(match code {
            Some(c) => lookup_embedding(c, table),
            None => (vec![0.0; table.dimension()], false),
        })
    }

    /// Distinct categories seen among `codes`, with their weights.
    pub fn comorbidity_categories(&self, codes: &[Icd9Code]) -> Vec<(String, i32)> {
        let Some(elix) = &self.elixhauser else { return Vec::new() };
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for code in codes {
            if let Some((cat, w)) = elix.lookup(code) {
                if seen.insert(cat.to_string()) {
                    out.push((cat.to_string(), w));
                }
            }
        }
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dx(t: &str) -> Icd9Code {
        Icd9Code::parse(t, CodeKind::Diagnosis).unwrap()
    }

    fn map(text: &str, kind: TableKind) -> Result<LoadedTable, MapError> {
        parse_map_table("fixture", text, kind)
    }

    #[test]
    fn gem_fixture_loads() {
        let text = "# source: test fixture\n# version: 1\nicd9,icd10\n724.2,M54.5\n428.0,I50.9\n";
        let LoadedTable::Map(gem) = map(text, TableKind::Gem).unwrap() else { panic!() };
        assert_eq!(gem.len(), 2);
        assert_eq!(gem.provenance.source.as_deref(), Some("test fixture"));
        assert_eq!(map_icd9_to_icd10(&dx("724.2"), &gem), Some("M54.5"));
        assert_eq!(map_icd9_to_icd10(&dx("401.9"), &gem), None);
    }

    #[test]
    fn gem_multi_mapping_keeps_file_order() {
        let text = "icd9,icd10\n250.00,E11.9\n724.2,M54.5\n250.00,E11.65\n250.00,E13.9\n";
        let LoadedTable::Map(gem) = map(text, TableKind::Gem).unwrap() else { panic!() };
        assert_eq!(gem.values(&dx("250.00")), ["E11.9", "E11.65", "E13.9"]);
        assert_eq!(map_icd9_to_icd10(&dx("250.00"), &gem), Some("E11.9"));
    }

    #[test]
    fn duplicate_rows_name_the_line() {
        let text = "icd9,drg\n428.0,291\n724.2,552\n428.0,292\n";
        match map(text, TableKind::Drg).unwrap_err() {
            MapError::Format { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("duplicate"));
            }
            e => panic!("{e}"),
        }
        let text = "icd9,icd10\n428.0,I50.9\n428.0,I50.9\n";
        assert!(matches!(map(text, TableKind::Gem), Err(MapError::Format { line: 3, .. })));
    }

    #[test]
    fn drg_groups() {
        let text = "icd9,drg\n428.0,291\n428.1,291\n724.2,552\n";
        let LoadedTable::Map(drg) = map(text, TableKind::Drg).unwrap() else { panic!() };
        assert_eq!(drg_group_of(&dx("724.2"), &drg), "552");
        assert_eq!(drg_group_of(&dx("999.9"), &drg), UNGROUPED);
        assert_eq!(drg_group_of(&dx("428.0"), &drg), drg_group_of(&dx("428.1"), &drg));
    }

    #[test]
    fn elixhauser_longest_prefix() {
        let text = "# categories: CHF,HTN,CHF_ACUTE\nprefix,category,weight\n428,CHF,7\n428.0,CHF_ACUTE,9\n401,HTN,0\n";
        let LoadedTable::Elixhauser(elix) = map(text, TableKind::Elixhauser).unwrap() else { panic!() };
        assert_eq!(elix.lookup(&dx("428.0")), Some(("CHF_ACUTE", 9)));
        assert_eq!(elix.lookup(&dx("428.01")), Some(("CHF_ACUTE", 9)));
        assert_eq!(elix.lookup(&dx("428.1")), Some(("CHF", 7)));
        assert_eq!(elix.lookup(&dx("42.1")), None);
        assert_eq!(elix.lookup(&dx("724.2")), None);
    }

    #[test]
    fn elixhauser_rejects_undeclared_category_and_duplicates() {
        let text = "# categories: CHF\nprefix,category,weight\n428,HTN,7\n";
        assert!(matches!(map(text, TableKind::Elixhauser), Err(MapError::Format { line: 3, .. })));
        let text = "# categories: CHF\nprefix,category,weight\n428,CHF,7\n428,CHF,-1\n";
        assert!(matches!(map(text, TableKind::Elixhauser), Err(MapError::Format { line: 4, .. })));
        let text = "prefix,category,weight\n428,CHF,7\n";
        assert!(map(text, TableKind::Elixhauser).is_err());
    }

    fn embedding_text(dim: usize, rows: &[(&str, usize)]) -> String {
        let mut s = format!("# dimension: {dim}\ncode");
        for i in 1..=dim {
            s.push_str(&format!(",v{i}"));
        }
        s.push('\n');
        for (code, n) in rows {
            s.push_str(code);
            for i in 0..*n {
                s.push_str(&format!(",{}", i as f64 * 0.01));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn embedding_dimension_mismatch() {
        let text = embedding_text(100, &[("I50.9", 100), ("M54.5", 99)]);
        match map(&text, TableKind::DiagnosisEmbedding).unwrap_err() {
            MapError::DimensionMismatch { line, expected, found, .. } => {
                assert_eq!((line, expected, found), (4, 100, 99));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn embedding_lookup() {
        let text = embedding_text(100, &[("724.2", 100)]);
        let LoadedTable::Embedding(t) = map(&text, TableKind::DiagnosisEmbedding).unwrap() else { panic!() };
        let (v, found) = lookup_embedding(&dx("724.2"), &t);
        assert!(found);
        assert_eq!(v.len(), 100);
        assert_eq!(v[3], 0.03);
        let (v, found) = lookup_embedding(&dx("401.9"), &t);
        assert!(!found);
        assert_eq!(v, vec![0.0; 100]);
    }

    #[test]
    fn embedding_rejects_non_finite() {
        let text = "# dimension: 2\ncode,v1,v2\n724.2,1.0,NaN\n";
        assert!(matches!(map(text, TableKind::DiagnosisEmbedding), Err(MapError::Format { line: 3, .. })));
    }

    #[test]
    fn procedure_embeddings_default_to_300() {
        let text = embedding_text(300, &[("88.93", 300)]);
        let text = text.replacen("# dimension: 300\n", "", 1);
        let LoadedTable::Embedding(t) = map(&text, TableKind::ProcedureEmbedding).unwrap() else { panic!() };
        assert_eq!(t.dimension(), 300);
    }

    #[test]
    fn csv_round_trip_of_tables() {
        let text = "# source: s\n# categories: CHF,HTN\nprefix,category,weight\n428,CHF,7\n401,HTN,-1\n";
        let LoadedTable::Elixhauser(a) = map(text, TableKind::Elixhauser).unwrap() else { panic!() };
        let LoadedTable::Elixhauser(b) = map(&a.to_csv(), TableKind::Elixhauser).unwrap() else { panic!() };
        assert_eq!(b.lookup(&dx("401.9")), Some(("HTN", -1)));
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn comorbidity_categories_are_distinct() {
        let text = "# categories: CHF,HTN\nprefix,category,weight\n428,CHF,7\n401,HTN,0\n";
        let LoadedTable::Elixhauser(elix) = map(text, TableKind::Elixhauser).unwrap() else { panic!() };
        let maps = CodeMapSet { elixhauser: Some(elix), ..Default::default() };
        let cats = maps.comorbidity_categories(&[dx("428.0"), dx("428.1"), dx("724.2")]);
        assert_eq!(cats, vec![("CHF".to_string(), 7)]);
    }

    #[test]
    fn bundled_fixtures_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/maps");
        let maps = CodeMapSet::load_dir(&dir).unwrap();
        assert!(maps.gem.as_ref().is_some_and(|g| !g.is_empty()));
        assert!(maps.drg.as_ref().is_some_and(|g| !g.is_empty()));
        assert!(maps.elixhauser.as_ref().is_some_and(|g| !g.is_empty()));
        assert_eq!(maps.dx_embeddings.as_ref().unwrap().dimension(), 100);
        assert_eq!(maps.px_embeddings.as_ref().unwrap().dimension(), 300);
        let (v, found) = maps.diagnosis_embedding(&dx("428.0")).unwrap();
        assert!(found);
        assert_eq!(v.len(), 100);
    }
}
