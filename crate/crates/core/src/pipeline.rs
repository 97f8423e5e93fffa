//! End-to-end runs over one snapshot pair.
//!
//! Every command writes into `<out_dir>/.staging` first and moves each
//! finished file into `out_dir` with a rename, so final paths only ever hold
//! complete files. A failed run leaves its partial files in the staging
//! directory, which the next run clears.
//!
//! Outputs:
//!
//! | file                | written by      |
//! |---------------------|-----------------|
//! | `diffset.tsv`       | diffset         |
//! | `corpus.tsv`        | diffset         |
//! | `probes.tsv`        | probes          |
//! | `funnel.tsv`        | probes          |
//! | `stats.txt`         | stats           |
//! | `distributions.tsv` | stats           |
//! | `manifest.txt`      | every command   |

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::categorize::{categorize_with, dedup_triples, Category, PreviousFacts};
use crate::diff::{diff_snapshot, read_diffset, DiffOptions, DiffsetEntry, PreviousSnapshot};
use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::ingest::{
    read_articles, read_mapping, read_triples, write_records, ArticleFormat, ArticleSnapshot,
    EntityMapping, FactTriple, SnapshotPair, TripleFormat,
};
use crate::qc::{
    align_and_filter, read_probes, sample_unchanged, ArticleTexts, FilterReport, FrequencyCaps,
    ProbeRecord, QcConfig, StageCounts,
};
use crate::stats::{
    funnel_detail, probe_distributions, probe_funnel, read_corpus_tsv, render_corpus,
    render_distributions, write_corpus_tsv, write_distributions_tsv, CorpusStats, DEFAULT_TOP_K,
};

pub const DIFFSET_FILE: &str = "diffset.tsv";
pub const CORPUS_FILE: &str = "corpus.tsv";
pub const PROBES_FILE: &str = "probes.tsv";
pub const FUNNEL_FILE: &str = "funnel.tsv";
pub const STATS_FILE: &str = "stats.txt";
pub const DISTRIBUTIONS_FILE: &str = "distributions.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const STAGING_DIR: &str = ".staging";

const READ_BUFFER: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Diffset,
    Probes,
    Stats,
    All,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Diffset => "diffset",
            Command::Probes => "probes",
            Command::Stats => "stats",
            Command::All => "all",
        }
    }
}

/// Settings for one run. Built from defaults, then a `key=value` file, then
/// command-line overrides, all through [`PipelineConfig::set`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prev_articles: Option<PathBuf>,
    pub recent_articles: Option<PathBuf>,
    pub prev_triples: Option<PathBuf>,
    pub recent_triples: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub article_format: ArticleFormat,
    pub triple_format: TripleFormat,
    pub out_dir: Option<PathBuf>,
    pub prev_tag: Option<String>,
    pub recent_tag: Option<String>,
    pub seed: u64,
    pub sample_rate: Fraction,
    pub caps: FrequencyCaps,
    pub workers: usize,
    pub case_insensitive: bool,
    pub strip_markup: bool,
    pub force: bool,
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prev_articles: None,
            recent_articles: None,
            prev_triples: None,
            recent_triples: None,
            mapping: None,
            article_format: ArticleFormat::XmlDump,
            triple_format: TripleFormat::Tsv,
            out_dir: None,
            prev_tag: None,
            recent_tag: None,
            seed: 0,
            sample_rate: Fraction::new(1, 1000).unwrap(),
            caps: FrequencyCaps::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            case_insensitive: false,
            strip_markup: false,
            force: false,
            top_k: DEFAULT_TOP_K,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: {value:?} is not a valid number")))
}

impl PipelineConfig {
    /// Sets one field. Keys may use `-` or `_`; relative paths are resolved
    /// against `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let path = || {
            let p = PathBuf::from(value);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        match key.as_str() {
            "prev_articles" => self.prev_articles = Some(path()),
            "recent_articles" => self.recent_articles = Some(path()),
            "prev_triples" => self.prev_triples = Some(path()),
            "recent_triples" => self.recent_triples = Some(path()),
            "mapping" => self.mapping = Some(path()),
            "out_dir" => self.out_dir = Some(path()),
            "article_format" => self.article_format = value.parse()?,
            "triple_format" => self.triple_format = value.parse()?,
            "prev_tag" => self.prev_tag = Some(value.to_owned()),
            "recent_tag" => self.recent_tag = Some(value.to_owned()),
            "seed" => self.seed = parse_num(&key, value)?,
            "sample_rate" => self.sample_rate = value.parse()?,
            "subject_cap" => self.caps.subject = value.parse()?,
            "object_cap" => self.caps.object = value.parse()?,
            "relation_cap" => self.caps.relation = value.parse()?,
            "workers" => self.workers = parse_num(&key, value)?,
            "case_insensitive" => self.case_insensitive = parse_bool(&key, value)?,
            "strip_markup" => self.strip_markup = parse_bool(&key, value)?,
            "force" => self.force = parse_bool(&key, value)?,
            "top_k" => self.top_k = parse_num(&key, value)?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` file. Blank lines and lines starting with `#`
    /// are ignored; relative paths are taken relative to the file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}: line {}: expected key=value", path.display(), n + 1))
            })?;
            self.set(key, value, Some(base))
                .map_err(|e| Error::Config(format!("{}: line {}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn pair(&self) -> Result<SnapshotPair> {
        match (&self.prev_tag, &self.recent_tag) {
            (Some(p), Some(r)) => SnapshotPair::new(p.clone(), r.clone()),
            _ => Err(Error::Config("prev_tag and recent_tag are required".into())),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("out_dir is required".into()))
    }

    fn input(&self, name: &str) -> Option<&Path> {
        match name {
            "prev_articles" => self.prev_articles.as_deref(),
            "recent_articles" => self.recent_articles.as_deref(),
            "prev_triples" => self.prev_triples.as_deref(),
            "recent_triples" => self.recent_triples.as_deref(),
            "mapping" => self.mapping.as_deref(),
            _ => None,
        }
    }

    fn require(&self, name: &str) -> Result<&Path> {
        let path = self
            .input(name)
            .ok_or_else(|| Error::Config(format!("{name} is required")))?;
        if !path.is_file() {
            return Err(Error::Config(format!("{name}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// Checks everything `command` needs before any data is read.
    pub fn validate(&self, command: Command) -> Result<()> {
        self.pair()?;
        self.out_dir()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.sample_rate.is_zero() || self.sample_rate.exceeds_one() {
            return Err(Error::InvalidRate(self.sample_rate.to_f64()));
        }
        for (name, cap) in [
            ("subject_cap", self.caps.subject),
            ("object_cap", self.caps.object),
            ("relation_cap", self.caps.relation),
        ] {
            if cap.exceeds_one() {
                return Err(Error::Config(format!("{name} must be at most 1")));
            }
        }
        let needs: &[&str] = match command {
            Command::Diffset => &["prev_articles", "recent_articles"],
            Command::Probes => &["prev_triples", "recent_triples", "mapping", "recent_articles"],
            Command::Stats => &[],
            Command::All => &["prev_articles", "recent_articles", "prev_triples", "recent_triples", "mapping"],
        };
        for name in needs {
            self.require(name)?;
        }
        if command == Command::Probes && !self.out_dir()?.join(DIFFSET_FILE).is_file() {
            self.require("prev_articles")?;
        }
        if command == Command::Stats {
            let dir = self.out_dir()?;
            for file in [CORPUS_FILE, PROBES_FILE, FUNNEL_FILE] {
                if !dir.join(file).is_file() {
                    return Err(Error::Config(format!(
                        "{} is missing; run the diffset and probes commands first",
                        dir.join(file).display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn diff_options(&self) -> DiffOptions {
        DiffOptions {
            strip_markup: self.strip_markup,
            workers: self.workers,
            ..DiffOptions::default()
        }
    }

    fn qc_config(&self) -> QcConfig {
        QcConfig {
            sample_rate: self.sample_rate,
            seed: self.seed,
            caps: self.caps,
            case_insensitive: self.case_insensitive,
            workers: self.workers,
        }
    }

    /// Settings that influence output bytes. Paths, worker count and `force`
    /// are left out.
    fn output_settings(&self) -> Vec<(&'static str, String)> {
        vec![
            ("prev_tag", self.prev_tag.clone().unwrap_or_default()),
            ("recent_tag", self.recent_tag.clone().unwrap_or_default()),
            ("article_format", self.article_format.to_string()),
            ("triple_format", self.triple_format.to_string()),
            ("seed", self.seed.to_string()),
            ("sample_rate", self.sample_rate.to_string()),
            ("subject_cap", self.caps.subject.to_string()),
            ("object_cap", self.caps.object.to_string()),
            ("relation_cap", self.caps.relation.to_string()),
            ("case_insensitive", self.case_insensitive.to_string()),
            ("strip_markup", self.strip_markup.to_string()),
            ("top_k", self.top_k.to_string()),
        ]
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (key, value) in self.output_settings() {
            hasher.update(format!("{key}={value}\n"));
        }
        hex::encode(hasher.finalize())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(READ_BUFFER, f))
        .map_err(|e| Error::Io(e).in_file(path))
}

fn articles(path: &Path, format: ArticleFormat, tag: &str) -> Result<impl Iterator<Item = Result<ArticleSnapshot>> + Send> {
    let owned = path.to_path_buf();
    Ok(read_articles(open(path)?, format, tag).map(move |r| r.map_err(|e| e.in_file(&owned))))
}

fn triples(path: &Path, format: TripleFormat, tag: &str) -> Result<impl Iterator<Item = Result<FactTriple>>> {
    let owned = path.to_path_buf();
    Ok(read_triples(open(path)?, format, tag).map(move |r| r.map_err(|e| e.in_file(&owned))))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    io::copy(&mut open(path)?, &mut hasher).map_err(|e| Error::Io(e).in_file(path))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Files of one run, collected under the staging directory until commit.
struct Staging {
    out_dir: PathBuf,
    dir: PathBuf,
    files: Vec<&'static str>,
}

impl Staging {
    fn create(out_dir: &Path) -> Result<Self> {
        let dir = out_dir.join(STAGING_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::Io(e).in_file(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::Io(e).in_file(&dir))?;
        Ok(Staging {
            out_dir: out_dir.to_path_buf(),
            dir,
            files: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &'static str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::Io(e).in_file(&path))?;
        let mut sink = BufWriter::with_capacity(READ_BUFFER, file);
        body(&mut sink).map_err(|e| e.in_file(&path))?;
        let file = sink.into_inner().map_err(|e| Error::Io(e.into_error()).in_file(&path))?;
        file.sync_all().map_err(|e| Error::Io(e).in_file(&path))?;
        if !self.files.contains(&name) {
            self.files.push(name);
        }
        Ok(())
    }

    fn staged(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Renames every staged file into place, manifest last.
    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut files = self.files.clone();
        files.sort_by_key(|f| *f == MANIFEST_FILE);
        let mut committed = Vec::new();
        for name in files {
            let to = self.out_dir.join(name);
            fs::rename(self.dir.join(name), &to).map_err(|e| Error::Io(e).in_file(&to))?;
            committed.push(to);
        }
        fs::remove_dir_all(&self.dir).map_err(|e| Error::Io(e).in_file(&self.dir))?;
        Ok(committed)
    }
}

/// Run record: settings, input checksums and output checksums.
struct Manifest {
    lines: String,
}

impl Manifest {
    fn new(config: &PipelineConfig, command: Command) -> Self {
        let mut lines = String::new();
        let _ = writeln!(lines, "tool\twikidelta {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(lines, "command\t{}", command.as_str());
        for (key, value) in config.output_settings() {
            let _ = writeln!(lines, "setting\t{key}\t{value}");
        }
        let _ = writeln!(lines, "config_sha256\t{}", config.config_hash());
        Manifest { lines }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        let _ = writeln!(self.lines, "input\t{role}\t{digest}");
        Ok(())
    }

    fn output(&mut self, name: &str, staged: &Path) -> Result<()> {
        let digest = sha256_file(staged)?;
        let bytes = fs::metadata(staged).map_err(|e| Error::Io(e).in_file(staged))?.len();
        let _ = writeln!(self.lines, "output\t{name}\t{digest}\t{bytes}");
        Ok(())
    }

    /// Checksums every staged file, then stages the manifest itself.
    fn finish(mut self, staging: &mut Staging) -> Result<()> {
        for name in staging.files.clone() {
            self.output(name, &staging.staged(name))?;
        }
        staging.write(MANIFEST_FILE, |w| Ok(w.write_all(self.lines.as_bytes())?))
    }
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub corpus: Vec<CorpusStats>,
    pub diffset_entries: u64,
    pub report: Option<FilterReport>,
    pub probes: u64,
    pub outputs: Vec<PathBuf>,
    /// Set when `run_all` found a complete output directory and did nothing.
    pub already_complete: bool,
}

fn pair_label(pair: &SnapshotPair) -> String {
    pair.to_string()
}

struct DiffsetOutput {
    entries: Vec<DiffsetEntry>,
    corpus: Vec<CorpusStats>,
}

fn diffset_stage(config: &PipelineConfig, pair: &SnapshotPair, staging: &mut Staging) -> Result<DiffsetOutput> {
    let options = config.diff_options();
    let mut prev_stats = CorpusStats::new(pair.prev_tag());
    let mut recent_stats = CorpusStats::new(pair.recent_tag());

    let prev_iter = articles(config.require("prev_articles")?, config.article_format, pair.prev_tag())?
        .inspect(|a| {
            if let Ok(a) = a {
                prev_stats.add(&a.text);
            }
        });
    let prev = PreviousSnapshot::build(prev_iter, pair.prev_tag())?;

    let recent_iter = articles(config.require("recent_articles")?, config.article_format, pair.recent_tag())?
        .inspect(|a| {
            if let Ok(a) = a {
                recent_stats.add(&a.text);
            }
        });
    let entries = diff_snapshot(&prev, recent_iter, pair.recent_tag(), pair, &options)?;
    drop(prev);

    let mut diff_stats = CorpusStats::new(pair_label(pair));
    for e in &entries {
        diff_stats.add(&e.text);
    }
    let corpus = vec![prev_stats, diff_stats, recent_stats];

    staging.write(DIFFSET_FILE, |w| write_records(&entries, w).map(drop))?;
    staging.write(CORPUS_FILE, |w| Ok(write_corpus_tsv(&corpus, w)?))?;
    Ok(DiffsetOutput { entries, corpus })
}

struct ProbesOutput {
    probes: Vec<ProbeRecord>,
    report: FilterReport,
}

fn probes_stage(
    config: &PipelineConfig,
    pair: &SnapshotPair,
    diffset: &[DiffsetEntry],
    staging: &mut Staging,
) -> Result<ProbesOutput> {
    let mapping_path = config.require("mapping")?;
    let mapping: EntityMapping = read_mapping(open(mapping_path)?).map_err(|e| e.in_file(mapping_path))?;

    let index = PreviousFacts::build(triples(config.require("prev_triples")?, config.triple_format, pair.prev_tag())?)?;
    let recent: Vec<FactTriple> =
        triples(config.require("recent_triples")?, config.triple_format, pair.recent_tag())?.collect::<Result<_>>()?;
    let categorized = categorize_with(&index, dedup_triples(recent), config.workers)?;
    drop(index);

    let qc = config.qc_config();
    let mut report = FilterReport {
        categorized: StageCounts::of(&categorized),
        ..FilterReport::default()
    };
    let sampled = sample_unchanged(categorized, qc.sample_rate, qc.seed)?;
    report.sampled = StageCounts::of(&sampled);

    // Only articles some sampled fact can align with are kept in memory.
    let mut changed_ids = HashSet::new();
    let mut unchanged_ids = HashSet::new();
    for fact in &sampled {
        if let Some(article) = mapping.article_for(&fact.triple.subject_id) {
            match fact.category {
                Category::Changed => changed_ids.insert(article.to_owned()),
                Category::Unchanged => unchanged_ids.insert(article.to_owned()),
            };
        }
    }
    let mut diff_texts = ArticleTexts::new(qc.case_insensitive);
    for e in diffset.iter().filter(|e| changed_ids.contains(&e.article_id)) {
        diff_texts.insert_normalized(e.article_id.clone(), e.text.clone());
    }
    let full_texts = if unchanged_ids.is_empty() {
        ArticleTexts::new(qc.case_insensitive)
    } else {
        let recent = articles(config.require("recent_articles")?, config.article_format, pair.recent_tag())?;
        ArticleTexts::from_articles(recent, Some(&unchanged_ids), &config.diff_options(), qc.case_insensitive)?
    };

    let probes = align_and_filter(sampled, &mapping, &diff_texts, &full_texts, &qc, &mut report)?;
    report.check_monotone()?;
    let probes: Vec<ProbeRecord> = probes.iter().map(ProbeRecord::from).collect();

    staging.write(PROBES_FILE, |w| write_records(&probes, w).map(drop))?;
    staging.write(FUNNEL_FILE, |w| Ok(report.write_tsv(w)?))?;
    Ok(ProbesOutput { probes, report })
}

fn stats_stage(
    config: &PipelineConfig,
    pair: &SnapshotPair,
    corpus: &[CorpusStats],
    probes: &ProbesOutput,
    staging: &mut Staging,
) -> Result<()> {
    let distributions = probe_distributions(&probes.probes, config.top_k);
    let mut text = String::new();
    text.push_str("Corpus\n");
    text.push_str(&render_corpus(corpus));
    text.push_str("\nProbe funnel\n");
    text.push_str(&probe_funnel(&pair_label(pair), &probes.report)?);
    text.push_str("\nProbe funnel by stage\n");
    text.push_str(&funnel_detail(&probes.report)?);
    text.push('\n');
    text.push_str(&render_distributions(&distributions));

    staging.write(STATS_FILE, |w| Ok(w.write_all(text.as_bytes())?))?;
    staging.write(DISTRIBUTIONS_FILE, |w| Ok(write_distributions_tsv(&distributions, w)?))?;
    Ok(())
}

fn load_diffset(path: &Path, pair: &SnapshotPair) -> Result<Vec<DiffsetEntry>> {
    read_diffset(open(path)?, pair)
        .collect::<Result<_>>()
        .map_err(|e| e.in_file(path))
}

fn add_inputs(manifest: &mut Manifest, config: &PipelineConfig, names: &[&str]) -> Result<()> {
    for name in names {
        if let Some(path) = config.input(name) {
            manifest.input(name, path)?;
        }
    }
    Ok(())
}

/// Builds the diffset and corpus statistics.
pub fn run_diffset(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate(Command::Diffset)?;
    let pair = config.pair()?;
    let out_dir = config.out_dir()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(e).in_file(out_dir))?;
    let mut staging = Staging::create(out_dir)?;

    let diffset = diffset_stage(config, &pair, &mut staging)?;

    let mut manifest = Manifest::new(config, Command::Diffset);
    add_inputs(&mut manifest, config, &["prev_articles", "recent_articles"])?;
    manifest.finish(&mut staging)?;
    Ok(RunSummary {
        diffset_entries: diffset.entries.len() as u64,
        corpus: diffset.corpus,
        outputs: staging.commit()?,
        ..RunSummary::default()
    })
}

/// Categorizes, samples, aligns and filters facts. Uses `diffset.tsv` from
/// the output directory when present and builds it otherwise.
pub fn run_probes(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate(Command::Probes)?;
    let pair = config.pair()?;
    let out_dir = config.out_dir()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(e).in_file(out_dir))?;
    let existing = out_dir.join(DIFFSET_FILE);
    let mut staging = Staging::create(out_dir)?;
    let mut manifest = Manifest::new(config, Command::Probes);

    let (entries, corpus) = if existing.is_file() {
        manifest.input(DIFFSET_FILE, &existing)?;
        (load_diffset(&existing, &pair)?, Vec::new())
    } else {
        let d = diffset_stage(config, &pair, &mut staging)?;
        add_inputs(&mut manifest, config, &["prev_articles"])?;
        (d.entries, d.corpus)
    };
    let probes = probes_stage(config, &pair, &entries, &mut staging)?;

    add_inputs(&mut manifest, config, &["recent_articles", "prev_triples", "recent_triples", "mapping"])?;
    manifest.finish(&mut staging)?;
    Ok(RunSummary {
        corpus,
        diffset_entries: entries.len() as u64,
        probes: probes.probes.len() as u64,
        report: Some(probes.report),
        outputs: staging.commit()?,
        ..RunSummary::default()
    })
}

/// Renders reports from the corpus, probe and funnel files in the output directory.
pub fn run_stats(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate(Command::Stats)?;
    let pair = config.pair()?;
    let out_dir = config.out_dir()?;
    let mut manifest = Manifest::new(config, Command::Stats);

    let corpus_path = out_dir.join(CORPUS_FILE);
    let corpus = read_corpus_tsv(open(&corpus_path)?).map_err(|e| e.in_file(&corpus_path))?;
    let funnel_path = out_dir.join(FUNNEL_FILE);
    let report = FilterReport::read_tsv(open(&funnel_path)?).map_err(|e| e.in_file(&funnel_path))?;
    let probes_path = out_dir.join(PROBES_FILE);
    let probes: Vec<ProbeRecord> = read_probes(open(&probes_path)?)
        .collect::<Result<_>>()
        .map_err(|e| e.in_file(&probes_path))?;
    for (name, path) in [(CORPUS_FILE, &corpus_path), (FUNNEL_FILE, &funnel_path), (PROBES_FILE, &probes_path)] {
        manifest.input(name, path)?;
    }

    let mut staging = Staging::create(out_dir)?;
    let probes = ProbesOutput { probes, report };
    stats_stage(config, &pair, &corpus, &probes, &mut staging)?;
    manifest.finish(&mut staging)?;
    Ok(RunSummary {
        corpus,
        probes: probes.probes.len() as u64,
        report: Some(probes.report),
        outputs: staging.commit()?,
        ..RunSummary::default()
    })
}

pub const ALL_OUTPUTS: [&str; 7] = [
    DIFFSET_FILE,
    CORPUS_FILE,
    PROBES_FILE,
    FUNNEL_FILE,
    STATS_FILE,
    DISTRIBUTIONS_FILE,
    MANIFEST_FILE,
];

const ALL_INPUTS: [&str; 5] = ["prev_articles", "recent_articles", "prev_triples", "recent_triples", "mapping"];

fn all_manifest_header(config: &PipelineConfig) -> Result<String> {
    let mut manifest = Manifest::new(config, Command::All);
    add_inputs(&mut manifest, config, &ALL_INPUTS)?;
    Ok(manifest.lines)
}

/// True when `out_dir` holds the outputs of an `all` run with the same
/// settings and inputs, and every output still matches its checksum.
pub fn is_complete(config: &PipelineConfig) -> Result<bool> {
    let out_dir = config.out_dir()?;
    let Ok(existing) = fs::read_to_string(out_dir.join(MANIFEST_FILE)) else {
        return Ok(false);
    };
    let header = all_manifest_header(config)?;
    let Some(outputs) = existing.strip_prefix(&header) else {
        return Ok(false);
    };
    let mut seen = 0;
    for line in outputs.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        let ["output", name, digest, _bytes] = fields[..] else {
            return Ok(false);
        };
        let path = out_dir.join(name);
        if !path.is_file() || sha256_file(&path)? != digest {
            return Ok(false);
        }
        seen += 1;
    }
    Ok(seen == ALL_OUTPUTS.len() - 1)
}

/// Diffset, probes and statistics in one pass, committed together.
pub fn run_all(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate(Command::All)?;
    if !config.force && is_complete(config)? {
        return Ok(RunSummary {
            already_complete: true,
            ..RunSummary::default()
        });
    }
    let pair = config.pair()?;
    let out_dir = config.out_dir()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(e).in_file(out_dir))?;
    let mut staging = Staging::create(out_dir)?;

    let diffset = diffset_stage(config, &pair, &mut staging)?;
    let probes = probes_stage(config, &pair, &diffset.entries, &mut staging)?;
    let diffset_entries = diffset.entries.len() as u64;
    drop(diffset.entries);
    stats_stage(config, &pair, &diffset.corpus, &probes, &mut staging)?;

    let mut manifest = Manifest::new(config, Command::All);
    add_inputs(&mut manifest, config, &ALL_INPUTS)?;
    manifest.finish(&mut staging)?;
    Ok(RunSummary {
        corpus: diffset.corpus,
        diffset_entries,
        probes: probes.probes.len() as u64,
        report: Some(probes.report),
        outputs: staging.commit()?,
        already_complete: false,
    })
}

/// Reads a probe file, for callers that consume the pipeline's output.
pub fn load_probes(path: &Path) -> Result<Vec<ProbeRecord>> {
    read_probes(open(path)?)
        .collect::<Result<_>>()
        .map_err(|e| e.in_file(path))
}

/// Reads a diffset file written by the pipeline.
pub fn load_diffset_file(path: &Path, pair: &SnapshotPair) -> Result<Vec<DiffsetEntry>> {
    load_diffset(path, pair)
}
