use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::split::SplitSummary;
use crate::bayes::{GammaParams, LengthCheckReport, LexicalCheckReport, PosteriorExport};
use crate::error::{Error, Result};
use crate::stats::Group;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, message: String },
}

/// Decision-rule names used as keys in the utility tables.
pub mod rule {
    pub const SINGLE_SAMPLE: &str = "single-sample";
    pub const BEAM: &str = "beam";
    pub const EXACT_MODE: &str = "exact-mode";
    pub const MBR: &str = "mbr";
    pub const ORACLE: &str = "oracle";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<String>,
    pub log_prob: f64,
    pub utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub index: u64,
    pub source: Vec<String>,
    pub reference: Vec<String>,
    /// Utility of each single-sample replicate.
    pub single_sample_utilities: Vec<f64>,
    pub beam: Decoded,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_mode: Option<Decoded>,
    /// False when the node budget ran out and the best found so far is shown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_mode_certified: Option<bool>,
    pub mbr: Decoded,
    pub mbr_expected_utility: f64,
    pub oracle: Decoded,
    pub unique_samples: usize,
    pub coverage: f64,
    pub beam_in_samples: bool,
    pub empty_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub mean: f64,
    pub std_dev: f64,
    /// Corpus-level mean utility of each replicate.
    pub replicates: Vec<f64>,
}

impl ReplicateSummary {
    pub fn from_replicates(replicates: Vec<f64>) -> Self {
        let n = replicates.len() as f64;
        let mean = replicates.iter().sum::<f64>() / n;
        let var = replicates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            std_dev: var.sqrt(),
            replicates,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub sentences: usize,
    pub mean_length: f64,
    pub distinct_unigrams: usize,
    pub distinct_bigrams: usize,
    pub distinct_skip_bigrams: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub beam_in_samples_rate: f64,
    /// Fraction of sources with the empty string among their samples.
    pub empty_string_rate: f64,
    pub empty_string_count: usize,
    pub all_unique_rate: f64,
    pub mean_coverage: f64,
    pub mean_unique: f64,
    /// Reference tokens outside the model vocabulary, left out of the group
    /// statistics.
    pub reference_oov_tokens: usize,
    pub groups: BTreeMap<Group, GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub alpha: GammaParams,
    pub beta: GammaParams,
    pub mu: f64,
    pub eta: GammaParams,
    pub scale: BTreeMap<Group, GammaParams>,
    /// E[s_g] * mu.
    pub mean_rate: BTreeMap<Group, f64>,
    /// Check of the training model on the training lengths.
    pub check: LengthCheckReport,
    pub group_checks: BTreeMap<Group, LengthCheckReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalSummary {
    pub alpha: GammaParams,
    pub beta: GammaParams,
    pub eta_unigram: GammaParams,
    pub eta_pair: GammaParams,
    pub unigram_scale: BTreeMap<Group, GammaParams>,
    pub pair_scale: BTreeMap<Group, GammaParams>,
    pub check: LexicalCheckReport,
    pub group_checks: BTreeMap<Group, LexicalCheckReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesSummary {
    pub length: LengthSummary,
    pub bigram: LexicalSummary,
    pub skip_bigram: LexicalSummary,
    pub posteriors: PosteriorExport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub status: RunStatus,
    pub config: RunConfig,
    #[serde(default)]
    pub split: Option<SplitSummary>,
    #[serde(default)]
    pub model_target_vocab: Option<usize>,
    #[serde(default)]
    pub sources: Vec<SourceReport>,
    /// Corpus-level mean utility per decision rule.
    #[serde(default)]
    pub utility: BTreeMap<String, f64>,
    #[serde(default)]
    pub single_sample: Option<ReplicateSummary>,
    #[serde(default)]
    pub stats: Option<StatsSummary>,
    #[serde(default)]
    pub bayes: Option<BayesSummary>,
    /// Cumulative coverage per source; exported as CSV, not in the JSON.
    #[serde(skip)]
    pub mass_curves: Vec<(u64, Vec<f64>)>,
    /// Group count tables with token strings; exported as CSV.
    #[serde(skip)]
    pub group_tables: Vec<GroupTable>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupTable {
    pub group: Option<Group>,
    pub lengths: BTreeMap<u64, u64>,
    pub unigrams: BTreeMap<String, u64>,
    pub bigrams: BTreeMap<(String, String), u64>,
    pub skip_bigrams: BTreeMap<(String, String), u64>,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            status: RunStatus::Complete,
            config,
            split: None,
            model_target_vocab: None,
            sources: Vec::new(),
            utility: BTreeMap::new(),
            single_sample: None,
            stats: None,
            bayes: None,
            mass_curves: Vec::new(),
            group_tables: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Report = serde_json::from_str(text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// Writes `report.json` and the CSV plot data into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
        self.write_csvs(dir)?;
        let marker = dir.join("FAILED");
        match &self.status {
            RunStatus::Complete => {
                if marker.exists() {
                    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
                }
            }
            RunStatus::Failed { stage, message } => {
                std::fs::write(&marker, format!("stage: {stage}\n{message}\n")).map_err(|e| Error::io(&marker, e))?;
            }
        }
        Ok(())
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        if !self.sources.is_empty() {
            csv_file(dir, "sources.csv", |w| self.write_sources_csv(w))?;
        }
        if !self.utility.is_empty() {
            csv_file(dir, "utility.csv", |w| self.write_utility_csv(w))?;
        }
        if let Some(single) = &self.single_sample {
            csv_file(dir, "single_sample.csv", |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["replicate", "mean_utility"])?;
                for (r, u) in single.replicates.iter().enumerate() {
                    w.write_record([r.to_string(), u.to_string()])?;
                }
                flush(w)
            })?;
        }
        if !self.mass_curves.is_empty() {
            csv_file(dir, "mass_curves.csv", |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["src_id", "t", "coverage"])?;
                for (src, curve) in &self.mass_curves {
                    for (t, c) in curve.iter().enumerate() {
                        w.write_record([src.to_string(), (t + 1).to_string(), c.to_string()])?;
                    }
                }
                flush(w)
            })?;
        }
        if !self.group_tables.is_empty() {
            self.write_group_csvs(dir)?;
        }
        if let Some(stats) = &self.stats {
            let path = dir.join("stats_summary.json");
            std::fs::write(&path, serde_json::to_string_pretty(stats)? + "\n").map_err(|e| Error::io(&path, e))?;
        }
        if let Some(bayes) = &self.bayes {
            csv_file(dir, "posterior_samples.csv", |w| bayes.posteriors.write_csv(w))?;
        }
        Ok(())
    }

    fn write_sources_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "src_id",
            "source",
            "reference",
            "beam",
            "exact_mode",
            "mbr",
            "oracle",
            "u_single_mean",
            "u_beam",
            "u_exact_mode",
            "u_mbr",
            "u_oracle",
            "unique_samples",
            "coverage",
            "beam_in_samples",
            "empty_samples",
        ])?;
        for s in &self.sources {
            let single = s.single_sample_utilities.iter().sum::<f64>() / s.single_sample_utilities.len().max(1) as f64;
            let (mode, u_mode) = match &s.exact_mode {
                Some(d) => (d.tokens.join(" "), d.utility.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                s.index.to_string(),
                s.source.join(" "),
                s.reference.join(" "),
                s.beam.tokens.join(" "),
                mode,
                s.mbr.tokens.join(" "),
                s.oracle.tokens.join(" "),
                single.to_string(),
                s.beam.utility.to_string(),
                u_mode,
                s.mbr.utility.to_string(),
                s.oracle.utility.to_string(),
                s.unique_samples.to_string(),
                s.coverage.to_string(),
                s.beam_in_samples.to_string(),
                s.empty_samples.to_string(),
            ])?;
        }
        flush(w)
    }

    fn write_utility_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rule", "mean_utility", "std_dev"])?;
        for (rule, u) in &self.utility {
            let sd = match (&self.single_sample, rule.as_str()) {
                (Some(s), rule::SINGLE_SAMPLE) => s.std_dev.to_string(),
                _ => String::new(),
            };
            w.write_record([rule.clone(), u.to_string(), sd])?;
        }
        flush(w)
    }

    fn write_group_csvs(&self, dir: &Path) -> Result<()> {
        let label = |t: &GroupTable| t.group.map(|g| g.to_string()).unwrap_or_default();
        csv_file(dir, "group_lengths.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["group", "length", "count"])?;
            for t in &self.group_tables {
                for (len, c) in &t.lengths {
                    w.write_record([label(t), len.to_string(), c.to_string()])?;
                }
            }
            flush(w)
        })?;
        csv_file(dir, "group_unigrams.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["group", "token", "count"])?;
            for t in &self.group_tables {
                for (tok, c) in &t.unigrams {
                    w.write_record([label(t), tok.clone(), c.to_string()])?;
                }
            }
            flush(w)
        })?;
        for (name, pick) in [
            ("group_bigrams.csv", (|t: &GroupTable| &t.bigrams) as fn(&GroupTable) -> &BTreeMap<(String, String), u64>),
            ("group_skip_bigrams.csv", |t: &GroupTable| &t.skip_bigrams),
        ] {
            csv_file(dir, name, |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["group", "first", "second", "count"])?;
                for t in &self.group_tables {
                    for ((a, b), c) in pick(t) {
                        w.write_record([label(t), a.clone(), b.clone(), c.to_string()])?;
                    }
                }
                flush(w)
            })?;
        }
        Ok(())
    }
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn csv_file<F>(dir: &Path, name: &str, write: F) -> Result<()>
where
    F: FnOnce(BufWriter<File>) -> Result<()>,
{
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write(BufWriter::new(file))
}
