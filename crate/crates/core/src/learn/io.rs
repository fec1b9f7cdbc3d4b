//! Versioned plain-text model file.
//!
//! ```text
//! loskit-model 1
//! family gbdt
//! config {"family":"gbdt",...}
//! schema <sha256 of the column names>
//! columns 3
//! col age_group
//! ...
//! categorical 1
//! base 7.25
//! encoder 1 10 5 1234 7.25 2
//! cat 40 812.5 101
//! ...
//! trees 100
//! tree 7
//! S 0 2.5 1 2
//! L 3.1 40
//! ...
//! end
//! ```
//! Floats are written in shortest round-trip form, so a model read back
//! predicts bit-identically. Leading `#` lines (a provenance header) are
//! skipped on read.

use std::io::{BufRead, Write};

use super::{ForestModel, GbdtModel, LearnError, Matrix, Model, ModelConfig, Node, RegressionTree, TargetEncoder};
use crate::provenance::digest_hex;

const MAGIC: &str = "loskit-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub columns: Vec<String>,
}

impl ModelFile {
    pub fn new(model: Model, columns: Vec<String>) -> Result<Self, LearnError> {
        if columns.len() != model.n_features() {
            return Err(LearnError::SchemaMismatch { expected: model.n_features(), found: columns.len() });
        }
        Ok(Self { model, columns })
    }

    pub fn schema_digest(&self) -> String {
        schema_digest(&self.columns)
    }

    pub fn config(&self) -> ModelConfig {
        match &self.model {
            Model::Tree(t) => ModelConfig::Tree(t.config),
            Model::Forest(f) => ModelConfig::Forest(f.config),
            Model::Gbdt(g) => ModelConfig::Gbdt(g.config),
        }
    }

    /// Predicts after checking that `columns` matches the training schema.
    pub fn predict(&self, columns: &[String], x: &Matrix) -> Result<Vec<f64>, LearnError> {
        if columns.len() != self.columns.len() {
            return Err(LearnError::SchemaMismatch { expected: self.columns.len(), found: columns.len() });
        }
        if let Some((a, b)) = self.columns.iter().zip(columns).find(|(a, b)| a != b) {
            return Err(LearnError::Format(format!("feature column {b:?} where the model expects {a:?}")));
        }
        self.model.predict(x)
    }
}

pub fn schema_digest(columns: &[String]) -> String {
    digest_hex(columns.join("\n").as_bytes())
}

fn write_tree(w: &mut impl Write, t: &RegressionTree) -> std::io::Result<()> {
    writeln!(w, "tree {}", t.nodes.len())?;
    for node in &t.nodes {
        match node {
            Node::Split { feature, threshold, left, right } => writeln!(w, "S {feature} {threshold:?} {left} {right}")?,
            Node::Leaf { value, n } => writeln!(w, "L {value:?} {n}")?,
        }
    }
    Ok(())
}

pub fn write_model(file: &ModelFile, mut w: impl Write) -> Result<(), LearnError> {
    let io = |e: std::io::Error| LearnError::Format(e.to_string());
    let config = serde_json::to_string(&file.config()).map_err(|e| LearnError::Format(e.to_string()))?;
    let family = file.config().family().as_str();
    (|| -> std::io::Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "family {family}")?;
        writeln!(w, "config {config}")?;
        writeln!(w, "schema {}", file.schema_digest())?;
        writeln!(w, "columns {}", file.columns.len())?;
        for c in &file.columns {
            writeln!(w, "col {c}")?;
        }
        let trees: Vec<&RegressionTree> = match &file.model {
            Model::Tree(t) => vec![t],
            Model::Forest(f) => f.trees.iter().collect(),
            Model::Gbdt(g) => {
                let cats: Vec<String> = g.categorical.iter().map(|c| c.to_string()).collect();
                writeln!(w, "categorical {}", cats.join(" ")).map(|_| ())?;
                writeln!(w, "base {:?}", g.base)?;
                for (&col, enc) in g.categorical.iter().zip(&g.encoders) {
                    writeln!(
                        w,
                        "encoder {col} {:?} {} {} {:?} {}",
                        enc.prior_weight,
                        enc.folds,
                        enc.seed,
                        enc.global_mean,
                        enc.n_categories()
                    )?;
                    for (c, sum, count) in enc.stats() {
                        writeln!(w, "cat {c} {sum:?} {count}")?;
                    }
                }
                let mse: Vec<String> = g.train_mse.iter().map(|v| format!("{v:?}")).collect();
                writeln!(w, "train_mse {}", mse.join(" "))?;
                g.trees.iter().collect()
            }
        };
        writeln!(w, "trees {}", trees.len())?;
        for t in trees {
            write_tree(&mut w, t)?;
        }
        writeln!(w, "end")
    })()
    .map_err(io)
}

fn fields<const N: usize>(text: &str) -> Result<[&str; N], LearnError> {
    let parts: Vec<&str> = text.split(' ').collect();
    parts.try_into().map_err(|p: Vec<&str>| LearnError::Format(format!("expected {N} fields, found {}", p.len())))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String, LearnError> {
        self.line_no += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(LearnError::Format(e.to_string())),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> LearnError {
        LearnError::Format(format!("line {}: {msg}", self.line_no))
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn expect(&mut self, key: &str) -> Result<String, LearnError> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            None if line == key => Ok(String::new()),
            _ => Err(self.err(format!("expected {key:?}, found {line:?}"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, LearnError> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn tree(&mut self, n_features: usize, config: super::TreeConfig) -> Result<RegressionTree, LearnError> {
        let n_nodes: usize = {
            let t = self.expect("tree")?;
            self.parse(&t)?
        };
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = self.next_line()?;
            let node = if let Some(rest) = line.strip_prefix("S ") {
                let [f, t, l, r] = fields::<4>(rest)?;
                let (feature, left, right): (usize, usize, usize) = (self.parse(f)?, self.parse(l)?, self.parse(r)?);
                if feature >= n_features || left >= n_nodes || right >= n_nodes {
                    return Err(self.err("node reference out of range"));
                }
                Node::Split { feature, threshold: self.parse(t)?, left, right }
            } else if let Some(rest) = line.strip_prefix("L ") {
                let [v, n] = fields::<2>(rest)?;
                Node::Leaf { value: self.parse(v)?, n: self.parse(n)? }
            } else {
                return Err(self.err(format!("bad node record {line:?}")));
            };
            nodes.push(node);
        }
        if nodes.is_empty() {
            return Err(self.err("tree without nodes"));
        }
        Ok(RegressionTree { nodes, n_features, config })
    }
}

pub fn read_model(r: impl BufRead) -> Result<ModelFile, LearnError> {
    let mut lines = Lines { inner: r.lines(), line_no: 0 };
    let mut header = lines.next_line()?;
    while header.starts_with('#') {
        header = lines.next_line()?;
    }
    match header.split_once(' ') {
        Some((MAGIC, v)) if v == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(lines.err(format!("unsupported model file version {v}"))),
        _ => return Err(lines.err("not a loskit model file")),
    }
    let family = lines.expect("family")?;
    let config_text = lines.expect("config")?;
    let config: ModelConfig = serde_json::from_str(&config_text).map_err(|e| lines.err(e))?;
    if config.family().as_str() != family {
        return Err(lines.err("family does not match config"));
    }
    let digest = lines.expect("schema")?;
    let n_cols: usize = {
        let t = lines.expect("columns")?;
        lines.parse(&t)?
    };
    let columns = (0..n_cols).map(|_| lines.expect("col")).collect::<Result<Vec<_>, _>>()?;
    if schema_digest(&columns) != digest {
        return Err(lines.err("schema digest does not match the column list"));
    }

    let mut gbdt_parts = None;
    if let ModelConfig::Gbdt(cfg) = config {
        let cat_text = lines.expect("categorical")?;
        let categorical: Vec<usize> = cat_text
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| lines.parse(s))
            .collect::<Result<_, _>>()?;
        if categorical.iter().any(|&c| c >= n_cols) {
            return Err(lines.err("categorical column out of range"));
        }
        let base: f64 = {
            let t = lines.expect("base")?;
            lines.parse(&t)?
        };
        let mut encoders = Vec::with_capacity(categorical.len());
        for &col in &categorical {
            let text = lines.expect("encoder")?;
            let [c, a, f, s, m, k] = fields::<6>(&text)?;
            if lines.parse::<usize>(c)? != col {
                return Err(lines.err("encoder column out of order"));
            }
            let k: usize = lines.parse(k)?;
            let mut stats = Vec::with_capacity(k);
            for _ in 0..k {
                let text = lines.expect("cat")?;
                let [id, sum, count] = fields::<3>(&text)?;
                stats.push((lines.parse(id)?, lines.parse(sum)?, lines.parse(count)?));
            }
            encoders.push(TargetEncoder::from_stats(lines.parse(a)?, lines.parse(f)?, lines.parse(s)?, lines.parse(m)?, stats));
        }
        let mse_text = lines.expect("train_mse")?;
        let train_mse = mse_text.split(' ').filter(|s| !s.is_empty()).map(|s| lines.parse(s)).collect::<Result<_, _>>()?;
        gbdt_parts = Some((cfg, categorical, base, encoders, train_mse));
    }

    let n_trees: usize = {
        let t = lines.expect("trees")?;
        lines.parse(&t)?
    };
    let tree_config = match config {
        ModelConfig::Tree(c) => c,
        ModelConfig::Forest(c) => super::TreeConfig { max_depth: c.max_depth, min_leaf: c.min_leaf, mtry: c.mtry },
        ModelConfig::Gbdt(c) => super::TreeConfig { max_depth: c.max_depth, min_leaf: c.min_leaf, mtry: None },
    };
    let trees = (0..n_trees).map(|_| lines.tree(n_cols, tree_config)).collect::<Result<Vec<_>, _>>()?;
    lines.expect("end")?;

    let model = match config {
        ModelConfig::Tree(_) => {
            let mut trees = trees;
            if trees.len() != 1 {
                return Err(LearnError::Format("a tree model holds exactly one tree".into()));
            }
            Model::Tree(trees.pop().expect("one tree"))
        }
        ModelConfig::Forest(c) => {
            if trees.len() != c.n_trees {
                return Err(LearnError::Format(format!("expected {} trees, found {}", c.n_trees, trees.len())));
            }
            Model::Forest(ForestModel { trees, config: c, n_features: n_cols })
        }
        ModelConfig::Gbdt(_) => {
            let (config, categorical, base, encoders, train_mse) = gbdt_parts.expect("parsed above");
            Model::Gbdt(GbdtModel { base, trees, config, n_features: n_cols, categorical, encoders, train_mse })
        }
    };
    ModelFile::new(model, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{fit_gbdt, fit_random_forest, fit_regression_tree, ForestConfig, GbdtConfig, TreeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> (Matrix, Vec<f64>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..120).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0..5) as f64, rng.gen::<f64>() * 1e-7]).collect();
        let y = rows.iter().map(|r| r[0] * 10.0 + r[1] + rng.gen::<f64>()).collect();
        (Matrix::from_rows(&rows).unwrap(), y, vec!["a".into(), "b".into(), "c".into()])
    }

    fn round_trip(file: &ModelFile) -> ModelFile {
        let mut buf = Vec::new();
        write_model(file, &mut buf).unwrap();
        read_model(buf.as_slice()).unwrap()
    }

    #[test]
    fn every_family_reads_back_identically() {
        let (x, y, cols) = data();
        let models = vec![
            Model::Tree(fit_regression_tree(&x, &y, &TreeConfig::default()).unwrap()),
            Model::Forest(fit_random_forest(&x, &y, &ForestConfig { n_trees: 5, ..ForestConfig::default() }).unwrap()),
            Model::Gbdt(fit_gbdt(&x, &[1], &y, &GbdtConfig { n_rounds: 12, ..GbdtConfig::default() }).unwrap()),
        ];
        for m in models {
            let file = ModelFile::new(m, cols.clone()).unwrap();
            let back = round_trip(&file);
            assert_eq!(back.model.predict(&x).unwrap(), file.model.predict(&x).unwrap());
            assert_eq!(back.columns, cols);
        }
    }

    #[test]
    fn schema_checks() {
        let (x, y, cols) = data();
        let file = ModelFile::new(Model::Tree(fit_regression_tree(&x, &y, &TreeConfig::default()).unwrap()), cols.clone())
            .unwrap();
        assert_eq!(
            file.predict(&cols[..2], &x.select_cols(&[0, 1])),
            Err(LearnError::SchemaMismatch { expected: 3, found: 2 })
        );
        let renamed = vec!["a".to_string(), "z".into(), "c".into()];
        assert!(matches!(file.predict(&renamed, &x), Err(LearnError::Format(_))));
        assert!(ModelFile::new(file.model.clone(), cols[..1].to_vec()).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (x, y, cols) = data();
        let file = ModelFile::new(Model::Tree(fit_regression_tree(&x, &y, &TreeConfig::default()).unwrap()), cols).unwrap();
        let mut buf = Vec::new();
        write_model(&file, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        assert!(read_model("garbage\n".as_bytes()).is_err());
        assert!(read_model(text.replace("loskit-model 1", "loskit-model 9").as_bytes()).is_err());
        assert!(read_model(text.replace("col b", "col q").as_bytes()).is_err());
        let truncated: String = text.lines().take(text.lines().count() - 2).map(|l| format!("{l}\n")).collect();
        assert!(read_model(truncated.as_bytes()).is_err());
        let with_header = format!("# tool: loskit\n# seed: 1\n{text}");
        assert_eq!(read_model(with_header.as_bytes()).unwrap().columns, file.columns);
    }
}
