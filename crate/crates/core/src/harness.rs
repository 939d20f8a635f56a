//! Offline evaluation: event logs, a synthetic document stream, and the two
//! evaluators that drive a policy over them.
//!
//! * [`replay_evaluate`] uses rejection replay: a round counts only when the
//!   policy picks the document the logger displayed, and only then does the
//!   policy see the logged click.
//! * [`simulate_evaluate`] runs against a synthetic stream with known latent
//!   CTRs, so every round is evaluated and clicks are drawn for whatever the
//!   policy picks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::policy::{Decision, PolicyConfig, PolicyState};
use crate::reward::DocId;
use crate::situation::{Ontology, Situation, SituationSpace, SituationStore};

/// ChaCha stream ids, so the generator, the simulated clicks and the policy
/// never share random numbers even under the same seed.
pub const GENERATOR_STREAM: u64 = 0;
pub const REWARD_STREAM: u64 = 1;
pub const POLICY_STREAM: u64 = 2;
/// Per-situation policies use `SITUATION_STREAM_BASE + index`.
pub const SITUATION_STREAM_BASE: u64 = 1 << 32;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One logged round.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t: u64,
    pub situation: Situation,
    pub candidates: Vec<DocId>,
    pub displayed: DocId,
    pub clicked: bool,
}

#[derive(Serialize)]
struct WireRecord<'a> {
    t: u64,
    location: &'a str,
    time: &'a str,
    social: &'a str,
    candidates: &'a [DocId],
    displayed: &'a DocId,
    clicked: u8,
}

impl EventRecord {
    pub fn to_json_line(&self) -> String {
        let wire = WireRecord {
            t: self.t,
            location: &self.situation.location,
            time: &self.situation.time,
            social: &self.situation.social,
            candidates: &self.candidates,
            displayed: &self.displayed,
            clicked: self.clicked as u8,
        };
        serde_json::to_string(&wire).expect("record serializes")
    }

    /// Parses one log line. `prev_t` is the previous round, if any.
    pub fn parse_line(line: &str, origin: &str, line_no: usize, prev_t: Option<u64>) -> Result<Self> {
        let err = |field: &str, reason: String| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            field: field.to_string(),
            reason,
        };
        let value: Value =
            serde_json::from_str(line).map_err(|e| err("<record>", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| err("<record>", "expected a JSON object".into()))?;

        let field = |name: &str| -> Result<&Value> {
            obj.get(name).ok_or_else(|| err(name, "missing".into()))
        };
        let string = |name: &str| -> Result<String> {
            field(name)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| err(name, "expected a string".into()))
        };

        let t = field("t")?
            .as_u64()
            .filter(|&t| t >= 1)
            .ok_or_else(|| err("t", "expected an integer >= 1".into()))?;
        if let Some(prev) = prev_t {
            if t <= prev {
                return Err(err("t", format!("{t} does not increase past {prev}")));
            }
        }
        let situation = Situation::new(string("location")?, string("time")?, string("social")?);
        let candidates = field("candidates")?
            .as_array()
            .ok_or_else(|| err("candidates", "expected an array".into()))?
            .iter()
            .map(|v| v.as_str().map(DocId::new))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| err("candidates", "expected an array of strings".into()))?;
        if candidates.is_empty() {
            return Err(err("candidates", "must not be empty".into()));
        }
        let displayed = DocId::new(string("displayed")?);
        if !candidates.contains(&displayed) {
            return Err(err("displayed", format!("`{displayed}` is not among the candidates")));
        }
        let clicked = match field("clicked")?.as_u64() {
            Some(0) => false,
            Some(1) => true,
            _ => return Err(err("clicked", "expected 0 or 1".into())),
        };
        Ok(Self {
            t,
            situation,
            candidates,
            displayed,
            clicked,
        })
    }
}

/// Streams records from line-delimited JSON, validating as it goes.
pub struct LogReader<R> {
    reader: R,
    origin: String,
    line_no: usize,
    prev_t: Option<u64>,
    buf: String,
    failed: bool,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R, origin: impl Into<String>) -> Self {
        Self {
            reader,
            origin: origin.into(),
            line_no: 0,
            prev_t: None,
            buf: String::new(),
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::io(&self.origin, e)));
                }
            }
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let rec = EventRecord::parse_line(line, &self.origin, self.line_no, self.prev_t);
            match &rec {
                Ok(r) => self.prev_t = Some(r.t),
                Err(_) => self.failed = true,
            }
            return Some(rec);
        }
    }
}

pub fn load_event_log(path: impl AsRef<Path>) -> Result<LogReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(LogReader::new(BufReader::new(file), path.display().to_string()))
}

pub fn write_log<'a, W: Write>(
    records: impl IntoIterator<Item = &'a EventRecord>,
    mut out: W,
) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    out.flush()
}

/// Parameters of the synthetic document stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Live documents at any time.
    pub docs: usize,
    pub ctr_min: f64,
    pub ctr_max: f64,
    /// Per-round probability that a fresh document replaces the oldest one.
    pub arrival_rate: f64,
    /// Rounds a document stays live after arriving.
    pub lifetime: u64,
    pub rounds: u64,
    pub candidates: usize,
    /// Distinct situations drawn from.
    pub situations: usize,
    pub ontology_branching: usize,
    pub ontology_levels: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            docs: 20,
            ctr_min: 0.02,
            ctr_max: 0.3,
            arrival_rate: 0.002,
            lifetime: 5_000,
            rounds: 100_000,
            candidates: 10,
            situations: 8,
            ontology_branching: 3,
            ontology_levels: 2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::invalid(name, reason));
        if self.docs == 0 {
            return bad("docs", "must be >= 1");
        }
        if !(0.0 <= self.ctr_min && self.ctr_min <= self.ctr_max && self.ctr_max <= 1.0) {
            return bad("ctr_min", "need 0 <= ctr_min <= ctr_max <= 1");
        }
        if !(0.0..=1.0).contains(&self.arrival_rate) {
            return bad("arrival_rate", "must be in [0, 1]");
        }
        if self.lifetime < 1 {
            return bad("lifetime", "must be >= 1");
        }
        if self.candidates == 0 || self.candidates > self.docs {
            return bad("candidates", "must be in 1..=docs");
        }
        if self.situations == 0 {
            return bad("situations", "must be >= 1");
        }
        if self.ontology_branching == 0 {
            return bad("ontology_branching", "must be >= 1");
        }
        Ok(())
    }
}

/// A generated round together with the hidden CTR of each candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRound {
    pub record: EventRecord,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LiveDoc {
    id: DocId,
    ctr: f64,
    arrival: u64,
}

/// Seeded generator of rounds; a uniform-random logger picks the displayed
/// document and its click is Bernoulli in the latent CTR.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    config: SyntheticConfig,
    rng: ChaCha8Rng,
    space: SituationSpace,
    pool: Vec<Situation>,
    live: Vec<LiveDoc>,
    next_doc: u64,
    t: u64,
}

impl SyntheticStream {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, GENERATOR_STREAM);
        let (b, l) = (config.ontology_branching, config.ontology_levels);
        let space = SituationSpace::new(
            Ontology::balanced("location", b, l),
            Ontology::balanced("time", b, l),
            Ontology::balanced("social", b, l),
        );
        let pick = |o: &Ontology, rng: &mut ChaCha8Rng| {
            let n = o.len();
            o.concepts().nth(rng.gen_range(0..n)).unwrap().to_string()
        };
        let pool = (0..config.situations)
            .map(|_| {
                Situation::new(
                    pick(space.location(), &mut rng),
                    pick(space.time(), &mut rng),
                    pick(space.social(), &mut rng),
                )
            })
            .collect();
        let mut stream = Self {
            config,
            rng,
            space,
            pool,
            live: Vec::new(),
            next_doc: 0,
            t: 0,
        };
        for _ in 0..stream.config.docs {
            let doc = stream.spawn(1);
            stream.live.push(doc);
        }
        Ok(stream)
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    /// Ontologies the generated situations are drawn from.
    pub fn space(&self) -> &SituationSpace {
        &self.space
    }

    fn spawn(&mut self, arrival: u64) -> LiveDoc {
        let id = DocId::new(format!("doc{}", self.next_doc));
        self.next_doc += 1;
        let ctr = if self.config.ctr_max > self.config.ctr_min {
            self.rng.gen_range(self.config.ctr_min..=self.config.ctr_max)
        } else {
            self.config.ctr_min
        };
        LiveDoc { id, ctr, arrival }
    }
}

impl Iterator for SyntheticStream {
    type Item = SyntheticRound;

    fn next(&mut self) -> Option<SyntheticRound> {
        if self.t >= self.config.rounds {
            return None;
        }
        self.t += 1;
        let t = self.t;

        for i in 0..self.live.len() {
            if t - self.live[i].arrival >= self.config.lifetime {
                self.live[i] = self.spawn(t);
            }
        }
        if self.rng.gen::<f64>() < self.config.arrival_rate {
            let oldest = (0..self.live.len())
                .min_by_key(|&i| self.live[i].arrival)
                .expect("live set is never empty");
            self.live[oldest] = self.spawn(t);
        }

        let picked = sample_indices(&mut self.rng, self.live.len(), self.config.candidates);
        let candidates: Vec<DocId> = picked.iter().map(|i| self.live[i].id.clone()).collect();
        let latent: Vec<f64> = picked.iter().map(|i| self.live[i].ctr).collect();
        let situation = self.pool[self.rng.gen_range(0..self.pool.len())].clone();
        let shown = self.rng.gen_range(0..candidates.len());
        let clicked = self.rng.gen::<f64>() < latent[shown];
        Some(SyntheticRound {
            record: EventRecord {
                t,
                situation,
                displayed: candidates[shown].clone(),
                candidates,
                clicked,
            },
            latent,
        })
    }
}

pub fn generate_synthetic_log(config: SyntheticConfig) -> Result<SyntheticStream> {
    SyntheticStream::new(config)
}

/// Anything that picks a document for a situation and learns from clicks.
pub trait Recommender {
    fn select(&mut self, situation: &Situation, candidates: &[DocId]) -> Result<Decision>;
    fn observe(&mut self, situation: &Situation, doc: &DocId, clicked: bool) -> Result<()>;
}

impl Recommender for PolicyState {
    fn select(&mut self, _situation: &Situation, candidates: &[DocId]) -> Result<Decision> {
        self.refresh_and_select(candidates)
    }

    fn observe(&mut self, _situation: &Situation, doc: &DocId, clicked: bool) -> Result<()> {
        PolicyState::observe(self, doc, clicked);
        Ok(())
    }
}

/// One policy state per sufficiently distinct situation.
pub struct SituationalPolicy {
    store: SituationStore<PolicyState>,
    config: PolicyConfig,
    seed: u64,
    floor: f64,
    current: Option<usize>,
}

impl SituationalPolicy {
    pub fn new(space: SituationSpace, config: PolicyConfig, seed: u64, floor: f64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            store: SituationStore::new(space),
            config,
            seed,
            floor,
            current: None,
        })
    }

    pub fn store(&self) -> &SituationStore<PolicyState> {
        &self.store
    }
}

impl Recommender for SituationalPolicy {
    fn select(&mut self, situation: &Situation, candidates: &[DocId]) -> Result<Decision> {
        let (config, seed) = (&self.config, self.seed);
        let idx = self.store.situation_index(situation, self.floor, |i| {
            PolicyState::with_rng(
                config.clone(),
                stream_rng(seed, SITUATION_STREAM_BASE + i as u64),
            )
        })?;
        self.current = Some(idx);
        self.store
            .state_mut(idx)
            .expect("index just resolved")
            .refresh_and_select(candidates)
    }

    fn observe(&mut self, _situation: &Situation, doc: &DocId, clicked: bool) -> Result<()> {
        let idx = self
            .current
            .take()
            .ok_or(Error::InsufficientData("observe without a preceding select"))?;
        self.store
            .state_mut(idx)
            .expect("index recorded by select")
            .observe(doc, clicked);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationMode {
    Replay,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u64,
    /// Undefined until the first evaluated round.
    pub cumulative_ctr: Option<f64>,
    pub epsilon: f64,
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: EvaluationMode,
    pub policy: Option<PolicyConfig>,
    pub seed: Option<u64>,
    pub rounds: u64,
    pub evaluated_rounds: u64,
    pub clicks: u64,
    pub final_ctr: Option<f64>,
    /// Set when no round could be evaluated.
    pub no_overlap: bool,
    /// Mean latent CTR of the best candidate per round (simulation only).
    pub oracle_ctr: Option<f64>,
    pub rows: Vec<RoundRow>,
}

impl RunReport {
    fn new(mode: EvaluationMode) -> Self {
        Self {
            mode,
            policy: None,
            seed: None,
            rounds: 0,
            evaluated_rounds: 0,
            clicks: 0,
            final_ctr: None,
            no_overlap: false,
            oracle_ctr: None,
            rows: Vec::new(),
        }
    }

    pub fn with_echo(mut self, policy: PolicyConfig, seed: u64) -> Self {
        self.policy = Some(policy);
        self.seed = Some(seed);
        self
    }

    fn push(&mut self, epsilon: f64, evaluated: bool, clicked: bool) {
        self.rounds += 1;
        if evaluated {
            self.evaluated_rounds += 1;
            self.clicks += clicked as u64;
        }
        let cumulative_ctr = (self.evaluated_rounds > 0)
            .then(|| self.clicks as f64 / self.evaluated_rounds as f64);
        self.rows.push(RoundRow {
            round: self.rounds,
            cumulative_ctr,
            epsilon,
            evaluated,
        });
    }

    fn finish(&mut self) {
        self.final_ctr = (self.evaluated_rounds > 0)
            .then(|| self.clicks as f64 / self.evaluated_rounds as f64);
        self.no_overlap = self.evaluated_rounds == 0;
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,cumulative_ctr,epsilon,evaluated\n");
        for r in &self.rows {
            let ctr = r.cumulative_ctr.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.round, ctr, r.epsilon, r.evaluated as u8));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Rejection replay of `policy` over a logged stream.
pub fn replay_evaluate<P, I>(policy: &mut P, log: I) -> Result<RunReport>
where
    P: Recommender + ?Sized,
    I: IntoIterator<Item = Result<EventRecord>>,
{
    let mut report = RunReport::new(EvaluationMode::Replay);
    for rec in log {
        let rec = rec?;
        let decision = policy.select(&rec.situation, &rec.candidates)?;
        let evaluated = decision.doc == rec.displayed;
        if evaluated {
            policy.observe(&rec.situation, &rec.displayed, rec.clicked)?;
        }
        report.push(decision.epsilon_used, evaluated, rec.clicked);
    }
    report.finish();
    Ok(report)
}

/// Runs `policy` on rounds with known latent CTRs, drawing each click from
/// the latent CTR of the picked document. Clicks come from `seed`'s reward
/// stream, so two policies run on the same rounds share random numbers.
pub fn simulate_evaluate<P, I>(policy: &mut P, rounds: I, seed: u64) -> Result<RunReport>
where
    P: Recommender + ?Sized,
    I: IntoIterator<Item = SyntheticRound>,
{
    let mut rewards = stream_rng(seed, REWARD_STREAM);
    let mut report = RunReport::new(EvaluationMode::Simulate);
    let mut oracle = 0.0;
    for round in rounds {
        let rec = &round.record;
        let decision = policy.select(&rec.situation, &rec.candidates)?;
        let pos = rec
            .candidates
            .iter()
            .position(|d| *d == decision.doc)
            .ok_or_else(|| Error::invalid("decision", format!("`{}` is not a candidate", decision.doc)))?;
        let clicked = rewards.gen::<f64>() < round.latent[pos];
        policy.observe(&rec.situation, &decision.doc, clicked)?;
        oracle += round.latent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.push(decision.epsilon_used, true, clicked);
    }
    report.finish();
    if report.rounds > 0 {
        report.oracle_ctr = Some(oracle / report.rounds as f64);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid("format", format!("unknown format `{other}`"))),
        }
    }
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads `s,p` rows. A first line that does not parse as numbers is taken
/// as a header.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (s, p) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (s.parse::<f64>(), p.parse::<f64>()) {
            (Ok(s), Ok(p)) => out.push((s, p)),
            _ if n == 0 => continue,
            (Err(_), _) => {
                return Err(Error::Parse {
                    path: origin,
                    line: n + 1,
                    field: "s".into(),
                    reason: format!("`{s}` is not a number"),
                })
            }
            (_, Err(_)) => {
                return Err(Error::Parse {
                    path: origin,
                    line: n + 1,
                    field: "p".into(),
                    reason: format!("`{p}` is not a number"),
                })
            }
        }
    }
    Ok(out)
}
