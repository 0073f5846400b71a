//! Arms, context schemas, observations, and the append-only observation log.
//!
//! The log is the single source of truth for all downstream estimation: every
//! row stores the realized assignment probabilities so estimators replay the
//! experiment exactly instead of recomputing propensities.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum-to-one tolerance for propensity vectors.
pub const PROPENSITY_SUM_TOL: f64 = 1e-9;

/// Ordered set of treatment arms. Arm indices are 0..K-1 in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmSet {
    aliases: Vec<String>,
}

impl ArmSet {
    pub fn new<S: Into<String>>(aliases: Vec<S>) -> Result<Self> {
        let aliases: Vec<String> = aliases.into_iter().map(Into::into).collect();
        if aliases.len() < 2 {
            return Err(Error::invalid("an experiment needs at least two arms"));
        }
        for (i, a) in aliases.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::invalid("arm aliases must be non-empty"));
            }
            if aliases[..i].contains(a) {
                return Err(Error::invalid(format!("duplicate arm alias `{a}`")));
            }
        }
        Ok(ArmSet { aliases })
    }

    pub fn k(&self) -> usize {
        self.aliases.len()
    }

    pub fn alias(&self, arm: usize) -> &str {
        &self.aliases[arm]
    }

    pub fn index_of(&self, alias: &str) -> Option<usize> {
        self.aliases.iter().position(|a| a == alias)
    }

    pub fn aliases(&self) -> &[String] {
        &self.aliases
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    IntegerOrdinal,
    Binary,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
}

impl Feature {
    pub fn new(name: impl Into<String>, kind: FeatureKind, min: f64, max: f64) -> Self {
        Feature { name: name.into(), kind, min, max }
    }

    fn check(&self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::invalid(format!("feature `{}`: non-finite value", self.name)));
        }
        if value < self.min || value > self.max {
            return Err(Error::invalid(format!(
                "feature `{}`: value {value} outside [{}, {}]",
                self.name, self.min, self.max
            )));
        }
        match self.kind {
            FeatureKind::IntegerOrdinal if value.fract() != 0.0 => Err(Error::invalid(format!(
                "feature `{}`: expected an integer, got {value}",
                self.name
            ))),
            FeatureKind::Binary if value != 0.0 && value != 1.0 => Err(Error::invalid(format!(
                "feature `{}`: expected 0 or 1, got {value}",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

/// Ordered feature list plus the declared outcome range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSchema {
    features: Vec<Feature>,
    pub outcome_min: f64,
    pub outcome_max: f64,
}

impl ContextSchema {
    pub fn new(features: Vec<Feature>, outcome_min: f64, outcome_max: f64) -> Result<Self> {
        if outcome_min >= outcome_max {
            return Err(Error::invalid("outcome range must be non-degenerate"));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::invalid(format!("duplicate feature name `{}`", f.name)));
            }
            if f.min > f.max {
                return Err(Error::invalid(format!("feature `{}`: min > max", f.name)));
            }
        }
        Ok(ContextSchema { features, outcome_min, outcome_max })
    }

    pub fn p(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn validate_context(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.p() {
            return Err(Error::invalid(format!(
                "context has {} values, schema declares {}",
                x.len(),
                self.p()
            )));
        }
        for (f, &v) in self.features.iter().zip(x) {
            f.check(v)?;
        }
        Ok(())
    }

    pub fn validate_outcome(&self, y: f64) -> Result<()> {
        if !y.is_finite() || y < self.outcome_min || y > self.outcome_max {
            return Err(Error::invalid(format!(
                "outcome {y} outside declared range [{}, {}]",
                self.outcome_min, self.outcome_max
            )));
        }
        Ok(())
    }
}

/// One logged period: context, realized arm, outcome, and the full propensity
/// vector under which the arm was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// 1-based period index, strictly increasing within a log.
    pub t: usize,
    /// 1-based batch index, non-decreasing.
    pub batch: usize,
    pub context: Vec<f64>,
    pub arm: usize,
    pub outcome: f64,
    pub propensities: Vec<f64>,
}

/// Append-only observation log with phase markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLog {
    schema: ContextSchema,
    arms: ArmSet,
    rows: Vec<Observation>,
    /// Number of learning-phase rows (rows [0..t_learn) are learning data).
    t_learn: Option<usize>,
    /// Within-batch propensity consistency check: context bits -> row index.
    batch_seen: HashMap<Vec<u64>, usize>,
}

impl ObservationLog {
    pub fn new(schema: ContextSchema, arms: ArmSet) -> Self {
        ObservationLog { schema, arms, rows: Vec::new(), t_learn: None, batch_seen: HashMap::new() }
    }

    pub fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Mark the first `count` rows as the learning phase.
    pub fn set_learning_end(&mut self, count: usize) -> Result<()> {
        if count > self.rows.len() {
            return Err(Error::invalid("learning end beyond the last row"));
        }
        self.t_learn = Some(count);
        Ok(())
    }

    pub fn t_learn(&self) -> Option<usize> {
        self.t_learn
    }

    /// Learning-phase rows; the whole log when no phase marker is set.
    pub fn learning_rows(&self) -> &[Observation] {
        match self.t_learn {
            Some(n) => &self.rows[..n],
            None => &self.rows,
        }
    }

    /// Evaluation-phase rows; empty when no phase marker is set.
    pub fn evaluation_rows(&self) -> &[Observation] {
        match self.t_learn {
            Some(n) => &self.rows[n..],
            None => &[],
        }
    }

    pub fn append(&mut self, obs: Observation) -> Result<()> {
        let row = self.rows.len();
        let k = self.arms.k();
        if let Some(last) = self.rows.last() {
            if obs.t <= last.t {
                return Err(Error::row(row, format!("t={} not strictly increasing", obs.t)));
            }
            if obs.batch < last.batch {
                return Err(Error::row(row, format!("batch={} decreased", obs.batch)));
            }
            if obs.batch > last.batch {
                self.batch_seen.clear();
            }
        } else if obs.t == 0 {
            return Err(Error::row(row, "period index t is 1-based"));
        }
        self.schema
            .validate_context(&obs.context)
            .map_err(|e| Error::row(row, e.to_string()))?;
        self.schema
            .validate_outcome(obs.outcome)
            .map_err(|e| Error::row(row, e.to_string()))?;
        if obs.arm >= k {
            return Err(Error::row(row, format!("arm index {} out of range", obs.arm)));
        }
        if obs.propensities.len() != k {
            return Err(Error::row(row, "propensity vector length != K"));
        }
        let sum: f64 = obs.propensities.iter().sum();
        if obs.propensities.iter().any(|e| !e.is_finite() || *e < 0.0)
            || (sum - 1.0).abs() > PROPENSITY_SUM_TOL
        {
            return Err(Error::row(row, format!("propensities do not sum to 1 (sum={sum})")));
        }
        if obs.propensities[obs.arm] <= 0.0 {
            return Err(Error::row(row, "realized arm has zero propensity"));
        }
        // Within a batch, identical contexts must carry identical propensities.
        let key: Vec<u64> = obs.context.iter().map(|v| v.to_bits()).collect();
        if let Some(&prev) = self.batch_seen.get(&key) {
            if self.rows[prev].propensities != obs.propensities {
                return Err(Error::row(
                    row,
                    format!("propensities differ from row {prev} with identical context in the same batch"),
                ));
            }
        } else {
            self.batch_seen.insert(key, row);
        }
        self.rows.push(obs);
        Ok(())
    }

    /// Batch indices present, in order.
    pub fn batch_ids(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.batch) {
                out.push(r.batch);
            }
        }
        out
    }

    // ---- serialization ----------------------------------------------------

    /// Write the columnar CSV: t, batch, features..., arm alias, outcome,
    /// e_1..e_K. Floats use the shortest round-trip representation, so a
    /// write/read cycle is bit-exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["t".into(), "batch".into()];
        header.extend(self.schema.features.iter().map(|f| f.name.clone()));
        header.push("arm".into());
        header.push("y".into());
        for i in 1..=self.arms.k() {
            header.push(format!("e_{i}"));
        }
        wtr.write_record(&header)?;
        for obs in &self.rows {
            let mut rec: Vec<String> = vec![obs.t.to_string(), obs.batch.to_string()];
            rec.extend(obs.context.iter().map(|v| format_f64(*v)));
            rec.push(self.arms.alias(obs.arm).to_string());
            rec.push(format_f64(obs.outcome));
            rec.extend(obs.propensities.iter().map(|v| format_f64(*v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> LogSidecar {
        LogSidecar {
            version: 1,
            schema: self.schema.clone(),
            arms: self.arms.clone(),
            t_learn: self.t_learn,
        }
    }

    pub fn read_csv<R: Read>(sidecar: &LogSidecar, r: R) -> Result<Self> {
        let mut log = ObservationLog::new(sidecar.schema.clone(), sidecar.arms.clone());
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let p = sidecar.schema.p();
        let k = sidecar.arms.k();
        let expected = 2 + p + 2 + k;
        if headers.len() != expected {
            return Err(Error::invalid(format!(
                "log CSV has {} columns, expected {expected}",
                headers.len()
            )));
        }
        for (name, feature) in headers.iter().skip(2).zip(sidecar.schema.features()) {
            if name != feature.name {
                return Err(Error::invalid(format!(
                    "log CSV column `{name}` does not match schema feature `{}`",
                    feature.name
                )));
            }
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::row(i, format!("unparseable {what} `{s}`")))
            };
            let t: usize = rec[0]
                .parse()
                .map_err(|_| Error::row(i, format!("unparseable t `{}`", &rec[0])))?;
            let batch: usize = rec[1]
                .parse()
                .map_err(|_| Error::row(i, format!("unparseable batch `{}`", &rec[1])))?;
            let context: Vec<f64> = (0..p)
                .map(|j| parse(&rec[2 + j], "feature"))
                .collect::<Result<_>>()?;
            let arm = sidecar
                .arms
                .index_of(&rec[2 + p])
                .ok_or_else(|| Error::row(i, format!("unknown arm alias `{}`", &rec[2 + p])))?;
            let outcome = parse(&rec[3 + p], "outcome")?;
            let propensities: Vec<f64> = (0..k)
                .map(|j| parse(&rec[4 + p + j], "propensity"))
                .collect::<Result<_>>()?;
            log.append(Observation { t, batch, context, arm, outcome, propensities })?;
        }
        if let Some(n) = sidecar.t_learn {
            log.set_learning_end(n)?;
        }
        Ok(log)
    }

    /// Save `<stem>.csv` and `<stem>.json` under the given directory.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let json_path = dir.join(format!("{stem}.json"));
        serde_json::to_writer_pretty(std::fs::File::create(json_path)?, &self.sidecar())?;
        Ok(())
    }

    pub fn load(csv_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let sidecar: LogSidecar = serde_json::from_reader(std::fs::File::open(sidecar_path)?)?;
        Self::read_csv(&sidecar, std::fs::File::open(csv_path)?)
    }
}

/// JSON sidecar stored next to the log CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSidecar {
    pub version: u32,
    pub schema: ContextSchema,
    pub arms: ArmSet,
    pub t_learn: Option<usize>,
}

/// Shortest representation that parses back to the identical f64.
pub fn format_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    // Trim a trailing ".0" for integers to keep files readable; the value
    // still round-trips exactly.
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // f64's Display already produces the shortest round-trip decimal.
    format!("{v}")
}

// ---- survey domain constants ----------------------------------------------

/// The survey context schema: demographics, political views, and media
/// consumption, with the documented numeric codings.
pub fn survey_schema() -> ContextSchema {
    use FeatureKind::*;
    let f = |name: &str, kind, min, max| Feature::new(name, kind, min, max);
    ContextSchema::new(
        vec![
            f("age", IntegerOrdinal, 18.0, 99.0),
            f("male", Binary, 0.0, 1.0),
            f("race", Binary, 0.0, 1.0),
            f("married", Binary, 0.0, 1.0),
            f("last_donation", IntegerOrdinal, 1.0, 4.0),
            f("political_leaning", IntegerOrdinal, 1.0, 7.0),
            f("religious", Binary, 0.0, 1.0),
            f("rural", Binary, 0.0, 1.0),
            f("views_immigration", IntegerOrdinal, 1.0, 5.0),
            f("views_global_warming", IntegerOrdinal, 1.0, 5.0),
            f("views_right_bear_arms", IntegerOrdinal, 1.0, 5.0),
            f("views_abortion", IntegerOrdinal, 1.0, 5.0),
            f("news_fox", IntegerOrdinal, 1.0, 6.0),
            f("news_cnn", IntegerOrdinal, 1.0, 6.0),
            f("news_nyt", IntegerOrdinal, 1.0, 6.0),
            f("news_wapo", IntegerOrdinal, 1.0, 6.0),
            f("news_wsj", IntegerOrdinal, 1.0, 6.0),
            f("social_media", IntegerOrdinal, 1.0, 6.0),
        ],
        -10.0,
        10.0,
    )
    .expect("survey schema is well-formed")
}

/// The eight-charity arm set used by the main experiment.
pub fn charity_arms() -> ArmSet {
    ArmSet::new(vec!["aipac", "blm", "zuckerberg", "clinton", "green", "nra", "peta", "planned"])
        .expect("charity arm set is well-formed")
}

/// Number of ordinal response levels on the -10..10 scale.
pub const SURVEY_LEVELS: usize = 21;

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_schema() -> ContextSchema {
        ContextSchema::new(
            vec![
                Feature::new("x1", FeatureKind::Real, -10.0, 10.0),
                Feature::new("x2", FeatureKind::Binary, 0.0, 1.0),
            ],
            -10.0,
            10.0,
        )
        .unwrap()
    }

    fn tiny_arms() -> ArmSet {
        ArmSet::new(vec!["a", "b", "c"]).unwrap()
    }

    fn obs(t: usize, batch: usize, x: Vec<f64>, arm: usize, y: f64, e: Vec<f64>) -> Observation {
        Observation { t, batch, context: x, arm, outcome: y, propensities: e }
    }

    #[test]
    fn arm_set_rejects_duplicates_and_singletons() {
        assert!(ArmSet::new(vec!["a", "a"]).is_err());
        assert!(ArmSet::new(vec!["a"]).is_err());
        assert!(ArmSet::new(vec!["a", ""]).is_err());
        let arms = tiny_arms();
        assert_eq!(arms.k(), 3);
        assert_eq!(arms.index_of("b"), Some(1));
    }

    #[test]
    fn schema_validates_contexts() {
        let s = tiny_schema();
        assert!(s.validate_context(&[0.5, 1.0]).is_ok());
        assert!(s.validate_context(&[0.5, 0.5]).is_err()); // binary violation
        assert!(s.validate_context(&[20.0, 1.0]).is_err()); // out of range
        assert!(s.validate_context(&[0.5]).is_err()); // wrong arity
        assert!(s.validate_outcome(11.0).is_err());
    }

    #[test]
    fn log_enforces_invariants() {
        let mut log = ObservationLog::new(tiny_schema(), tiny_arms());
        let u = vec![1.0 / 3.0; 3];
        log.append(obs(1, 1, vec![0.0, 0.0], 0, 1.0, u.clone())).unwrap();
        // t must strictly increase
        assert!(log.append(obs(1, 1, vec![0.0, 0.0], 0, 1.0, u.clone())).is_err());
        // batch cannot decrease
        log.append(obs(2, 2, vec![0.0, 0.0], 1, 1.0, u.clone())).unwrap();
        assert!(log.append(obs(3, 1, vec![0.0, 0.0], 0, 1.0, u.clone())).is_err());
        // propensities must sum to one
        assert!(log.append(obs(3, 2, vec![0.0, 0.0], 0, 1.0, vec![0.5, 0.5, 0.5])).is_err());
        // realized arm needs positive propensity
        assert!(log.append(obs(3, 2, vec![0.0, 0.0], 2, 1.0, vec![0.5, 0.5, 0.0])).is_err());
    }

    #[test]
    fn duplicate_context_in_batch_needs_identical_propensities() {
        let mut log = ObservationLog::new(tiny_schema(), tiny_arms());
        log.append(obs(1, 1, vec![1.0, 0.0], 0, 1.0, vec![0.5, 0.25, 0.25])).unwrap();
        // same batch, same x, different e: rejected
        assert!(log.append(obs(2, 1, vec![1.0, 0.0], 0, 1.0, vec![0.25, 0.5, 0.25])).is_err());
        // same x in a NEW batch may carry different e
        log.append(obs(2, 2, vec![1.0, 0.0], 0, 1.0, vec![0.25, 0.5, 0.25])).unwrap();
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut log = ObservationLog::new(tiny_schema(), tiny_arms());
        let e = vec![0.1 + 0.2 / 3.0, 0.3, 0.6 - 0.2 / 3.0];
        let e = {
            // force an awkward, non-terminating decimal that still sums to 1
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect::<Vec<_>>()
        };
        log.append(obs(1, 1, vec![std::f64::consts::PI - 3.0, 1.0], 2, -9.25, e.clone())).unwrap();
        log.append(obs(2, 1, vec![-0.1234567890123, 0.0], 1, 3.0, e)).unwrap();
        log.set_learning_end(1).unwrap();

        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let restored = ObservationLog::read_csv(&log.sidecar(), buf.as_slice()).unwrap();
        assert_eq!(log, restored);

        let mut buf2 = Vec::new();
        restored.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn survey_schema_shape() {
        let s = survey_schema();
        assert_eq!(s.p(), 18);
        assert_eq!(s.feature_index("political_leaning"), Some(5));
        assert_eq!(charity_arms().k(), 8);
    }
}
