//! Elicitation sessions and recommendations on top of the library and the
//! datastore. Transport-agnostic: the HTTP layer only maps requests onto these calls.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::datastore::ProfileStore;
use crate::embedding::{embed_headline, generate_variant_set, select_features, HeadlineTemplate, RoundPolicy, TemplateToken};
use crate::error::{Error, Result};
use crate::learning::{build_profile, derive_emotion_vector, CandidateProfile, ClusterModel, VariantCatalog};
use crate::lexicon::{words_for_cluster, Lexicon};
use crate::ranking::rank_items;
use crate::types::{EmotionVector, FeatureKind, Rating, ResponseExpression, VariantFeatures};

const SESSIONS: &str = "sessions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub rounds: usize,
    pub variants_per_round: usize,
    /// Sessions idle longer than this are abandoned.
    pub idle_timeout_secs: u64,
    /// Rounds before this index use the coverage policy; later rounds discriminate.
    pub coverage_rounds: usize,
    /// Context of elicitation stimuli; defaults to the lexicon's first context.
    pub context: Option<String>,
    pub headline: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            variants_per_round: 5,
            idle_timeout_secs: 24 * 60 * 60,
            coverage_rounds: 2,
            context: None,
            headline: "City unveils plan for the new riverside park".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Complete,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedVariant {
    pub variant_id: String,
    pub features: VariantFeatures,
    pub headline: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub stimulus_id: String,
    pub context_id: String,
    pub policy: RoundPolicy,
    pub variants: Vec<PresentedVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<BTreeMap<String, Rating>>,
}

/// What a client needs to render one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSet {
    pub session_id: String,
    pub candidate_id: String,
    pub round_index: usize,
    pub total_rounds: usize,
    pub stimulus_id: String,
    pub context_id: String,
    pub variants: Vec<PresentedVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubmitOutcome {
    NextRound { round: VariantSet },
    Complete { profile: CandidateProfile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationSession {
    pub session_id: String,
    pub candidate_id: String,
    /// Index of the round awaiting ratings; equals `rounds` once complete.
    pub round_index: usize,
    pub rounds: usize,
    pub state: SessionState,
    pub history: Vec<RoundRecord>,
    pub created_at: u64,
    pub last_activity: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    last_submission: Option<(String, SubmitOutcome)>,
}

impl ElicitationSession {
    fn current(&self) -> Option<&RoundRecord> {
        if self.state == SessionState::Active {
            self.history.get(self.round_index)
        } else {
            None
        }
    }

    pub fn current_set(&self) -> Option<VariantSet> {
        self.current().map(|r| VariantSet {
            session_id: self.session_id.clone(),
            candidate_id: self.candidate_id.clone(),
            round_index: r.round_index,
            total_rounds: self.rounds,
            stimulus_id: r.stimulus_id.clone(),
            context_id: r.context_id.clone(),
            variants: r.variants.clone(),
        })
    }

    /// Rated responses in round then presentation order.
    pub fn responses(&self) -> Vec<ResponseExpression> {
        self.history
            .iter()
            .filter_map(|r| r.ratings.as_ref().map(|ratings| (r, ratings)))
            .flat_map(|(r, ratings)| {
                r.variants.iter().map(move |v| {
                    ResponseExpression::new(
                        self.candidate_id.clone(),
                        r.stimulus_id.clone(),
                        v.variant_id.clone(),
                        r.context_id.clone(),
                        ratings[&v.variant_id],
                    )
                })
            })
            .collect()
    }

    pub fn variant_catalog(&self) -> VariantCatalog {
        self.history
            .iter()
            .flat_map(|r| r.variants.iter().map(|v| (v.variant_id.clone(), v.features.clone())))
            .collect()
    }
}

/// Summary returned by session lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub candidate_id: String,
    pub state: SessionState,
    pub round_index: usize,
    pub total_rounds: usize,
    pub policies: Vec<RoundPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current: Option<VariantSet>,
}

impl From<&ElicitationSession> for SessionView {
    fn from(s: &ElicitationSession) -> Self {
        Self {
            session_id: s.session_id.clone(),
            candidate_id: s.candidate_id.clone(),
            state: s.state,
            round_index: s.round_index,
            total_rounds: s.rounds,
            policies: s.history.iter().map(|r| r.policy).collect(),
            current: s.current_set(),
        }
    }
}

/// A recommendable news item or advertisement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    pub context: String,
    pub template: HeadlineTemplate,
    #[serde(default)]
    pub features: VariantFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item_id: String,
    pub rank: usize,
    pub score: f64,
    pub headline: String,
    pub features: VariantFeatures,
    pub profile: EmotionVector,
}

/// Items per context, each carrying the color that best matches one emotion dimension.
pub fn default_catalog(lex: &Lexicon) -> Result<Vec<CatalogItem>> {
    let kinds: BTreeSet<FeatureKind> =
        [FeatureKind::Color].into_iter().filter(|k| lex.categories(*k).next().is_some()).collect();
    let mut out = Vec::new();
    for ctx in lex.contexts() {
        for d in 0..lex.dims() {
            let target = EmotionVector::one_hot(lex.dims(), d)?;
            out.push(CatalogItem {
                item_id: format!("{ctx}-{}", d + 1),
                context: ctx.to_string(),
                template: HeadlineTemplate::new(vec![
                    TemplateToken::Literal { literal: format!("{ctx} brief {}:", d + 1) },
                    TemplateToken::Slot { slot: "tone".into(), context: ctx.to_string() },
                    TemplateToken::Literal { literal: "turn in the week's story".into() },
                ])?,
                features: select_features(&target, lex, &kinds)?,
            });
        }
    }
    Ok(out)
}

/// Computes recommendations for a reader profile; shared by the service and offline callers.
pub fn recommend(
    ev: &EmotionVector,
    items: &[CatalogItem],
    lex: &Lexicon,
    config: &EngineConfig,
) -> Result<Vec<Recommendation>> {
    if items.is_empty() {
        return Err(Error::EmptyItemSet);
    }
    let embedded = items
        .iter()
        .map(|it| Ok((it, embed_headline(&it.template, ev, &it.features, lex, config)?)))
        .collect::<Result<Vec<_>>>()?;
    let profiles: Vec<(String, EmotionVector)> =
        embedded.iter().map(|(it, e)| (it.item_id.clone(), e.profile.clone())).collect();
    let ranking = rank_items(ev, &profiles)?;
    let by_id: BTreeMap<&str, _> = embedded.iter().map(|(it, e)| (it.item_id.as_str(), e)).collect();
    Ok(ranking
        .into_iter()
        .map(|r| {
            let e = by_id[r.item_id.as_str()];
            Recommendation {
                headline: e.text(),
                features: e.features.clone(),
                profile: e.profile.clone(),
                item_id: r.item_id,
                rank: r.rank,
                score: r.score,
            }
        })
        .collect())
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

fn system_clock() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<Mutex<ElicitationSession>>>,
    active: HashMap<String, String>,
    completed: HashMap<String, usize>,
}

/// Session manager. Per-session mutations are serialized by a per-session lock;
/// all writes funnel through one store lock.
pub struct ElicitationService {
    config: EngineConfig,
    service: ServiceConfig,
    lexicon: Option<Arc<Lexicon>>,
    model: Option<ClusterModel>,
    catalog: Vec<CatalogItem>,
    store: Mutex<ProfileStore>,
    registry: Mutex<Registry>,
    clock: Clock,
}

impl ElicitationService {
    /// Opens the service over a store, reloading any persisted sessions.
    pub fn new(
        config: EngineConfig,
        service: ServiceConfig,
        lexicon: Option<Lexicon>,
        store: ProfileStore,
    ) -> Result<Self> {
        config.validate()?;
        if service.rounds == 0 || service.variants_per_round < 2 {
            return Err(Error::InvalidConfig("need >= 1 round and >= 2 variants per round".into()));
        }
        let catalog = match &lexicon {
            Some(l) => default_catalog(l)?,
            None => Vec::new(),
        };
        let mut registry = Registry::default();
        for s in store.list_documents::<ElicitationSession>(SESSIONS)? {
            match s.state {
                SessionState::Active => {
                    registry.active.insert(s.candidate_id.clone(), s.session_id.clone());
                }
                SessionState::Complete => *registry.completed.entry(s.candidate_id.clone()).or_default() += 1,
                SessionState::Abandoned => {}
            }
            registry.sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(Self {
            config,
            service,
            lexicon: lexicon.map(Arc::new),
            model: None,
            catalog,
            store: Mutex::new(store),
            registry: Mutex::new(registry),
            clock: Arc::new(system_clock),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_catalog(mut self, catalog: Vec<CatalogItem>) -> Self {
        self.catalog = catalog;
        self
    }

    /// Loads a cluster model for class assignment; medoid profiles are attached
    /// from the store's variant registry when missing.
    pub fn with_model(mut self, mut model: ClusterModel) -> Result<Self> {
        if model.medoids.iter().any(|m| m.ev.is_none()) {
            let lex = self.lexicon()?;
            let variants = self.store.lock().unwrap().variants()?;
            model.attach_medoid_profiles(&lex, &variants, &self.config)?;
        }
        self.model = Some(model);
        Ok(self)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn catalog(&self) -> &[CatalogItem] {
        &self.catalog
    }

    fn lexicon(&self) -> Result<Arc<Lexicon>> {
        self.lexicon.clone().ok_or(Error::LexiconUnavailable)
    }

    fn context(&self, lex: &Lexicon) -> Result<String> {
        match &self.service.context {
            Some(c) if lex.has_context(c) => Ok(c.clone()),
            Some(c) => Err(Error::UnknownContext(c.clone())),
            None => lex.contexts().first().map(|c| c.to_string()).ok_or(Error::LexiconUnavailable),
        }
    }

    fn build_round(&self, lex: &Lexicon, round_index: usize, ordinal: usize, policy: RoundPolicy) -> Result<RoundRecord> {
        let context_id = self.context(lex)?;
        let base = VariantFeatures { presentation_order: Some(round_index as u32 + 1), ..Default::default() };
        let features = generate_variant_set(&base, lex, self.service.variants_per_round, policy)?;
        let variants = features
            .into_iter()
            .map(|f| {
                let lead = match f.text_cluster {
                    Some(c) => words_for_cluster(lex, &context_id, c)?.first().map(|w| w.word.clone()),
                    None => None,
                };
                let headline = match lead {
                    Some(w) => format!("{w}: {}", self.service.headline),
                    None => self.service.headline.clone(),
                };
                Ok(PresentedVariant { variant_id: f.content_id(), features: f, headline })
            })
            .collect::<Result<Vec<_>>>()?;
        let stimulus_id = if ordinal == 0 {
            format!("ad-{}", round_index + 1)
        } else {
            format!("ad-{}-s{}", round_index + 1, ordinal + 1)
        };
        Ok(RoundRecord { round_index, stimulus_id, context_id, policy, variants, ratings: None })
    }

    fn persist(&self, session: &ElicitationSession) -> Result<()> {
        let store = self.store.lock().unwrap();
        store.register_variants(&session.variant_catalog())?;
        store.save_document(SESSIONS, &session.session_id, session)
    }

    fn expire_if_idle(&self, s: &mut ElicitationSession) -> Result<bool> {
        let now = (self.clock)();
        if s.state == SessionState::Active && now.saturating_sub(s.last_activity) > self.service.idle_timeout_secs {
            s.state = SessionState::Abandoned;
            self.persist(s)?;
            tracing::info!(session = %s.session_id, "session abandoned after idle timeout");
            return Ok(true);
        }
        Ok(false)
    }

    pub fn create_session(&self, candidate_id: &str) -> Result<VariantSet> {
        let lex = self.lexicon()?;
        if candidate_id.is_empty() {
            return Err(Error::InvalidParams("candidate_id must be non-empty".into()));
        }
        let mut reg = self.registry.lock().unwrap();
        if let Some(existing) = reg.active.get(candidate_id).cloned() {
            let handle = reg.sessions[&existing].clone();
            let mut s = handle.lock().unwrap();
            if !self.expire_if_idle(&mut s)? && s.state == SessionState::Active {
                return Err(Error::DuplicateActiveSession(candidate_id.to_string()));
            }
            reg.active.remove(candidate_id);
        }
        let ordinal = reg.completed.get(candidate_id).copied().unwrap_or(0);
        let first = self.build_round(&lex, 0, ordinal, RoundPolicy::Coverage)?;
        let now = (self.clock)();
        let session = ElicitationSession {
            session_id: uuid::Uuid::new_v4().to_string(),
            candidate_id: candidate_id.to_string(),
            round_index: 0,
            rounds: self.service.rounds,
            state: SessionState::Active,
            history: vec![first],
            created_at: now,
            last_activity: now,
            last_submission: None,
        };
        self.persist(&session)?;
        let set = session.current_set().expect("fresh session is active");
        reg.active.insert(candidate_id.to_string(), session.session_id.clone());
        reg.sessions.insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
        Ok(set)
    }

    fn handle(&self, session_id: &str) -> Result<Arc<Mutex<ElicitationSession>>> {
        self.registry
            .lock()
            .unwrap()
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))
    }

    pub fn get_session(&self, session_id: &str) -> Result<SessionView> {
        let handle = self.handle(session_id)?;
        let mut s = handle.lock().unwrap();
        self.expire_if_idle(&mut s)?;
        Ok(SessionView::from(&*s))
    }

    /// Records one round of ratings. A repeated idempotency key returns the earlier outcome.
    pub fn submit_ratings(
        &self,
        session_id: &str,
        ratings: &BTreeMap<String, i64>,
        idempotency_key: Option<&str>,
    ) -> Result<SubmitOutcome> {
        let lex = self.lexicon()?;
        let handle = self.handle(session_id)?;
        let mut s = handle.lock().unwrap();
        if let (Some(key), Some((last, outcome))) = (idempotency_key, &s.last_submission) {
            if key == last {
                return Ok(outcome.clone());
            }
        }
        if self.expire_if_idle(&mut s)? || s.state != SessionState::Active {
            return Err(Error::SessionNotActive(session_id.to_string()));
        }

        let round = s.current().expect("active session has a current round");
        let presented: BTreeSet<&str> = round.variants.iter().map(|v| v.variant_id.as_str()).collect();
        if let Some(unknown) = ratings.keys().find(|k| !presented.contains(k.as_str())) {
            return Err(Error::UnknownVariant(unknown.clone()));
        }
        if ratings.len() != presented.len() {
            return Err(Error::IncompleteRatings(format!("{} of {} variants rated", ratings.len(), presented.len())));
        }
        let checked = ratings
            .iter()
            .map(|(k, v)| Ok((k.clone(), Rating::new(*v, self.config.rating_max)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;

        // Work on a copy so a failed step leaves the session untouched.
        let mut next = s.clone();
        let idx = next.round_index;
        next.history[idx].ratings = Some(checked);
        next.round_index += 1;
        next.last_activity = (self.clock)();

        let outcome = if next.round_index < next.rounds {
            let policy = if next.round_index < self.service.coverage_rounds {
                RoundPolicy::Coverage
            } else {
                let ev = derive_emotion_vector(&next.responses(), &lex, &next.variant_catalog(), &self.config)?;
                let (first, second) = ev.top_two();
                RoundPolicy::Discrimination { first, second }
            };
            let ordinal = self.registry.lock().unwrap().completed.get(&next.candidate_id).copied().unwrap_or(0);
            let record = self.build_round(&lex, next.round_index, ordinal, policy)?;
            next.history.push(record);
            SubmitOutcome::NextRound { round: next.current_set().expect("still active") }
        } else {
            next.state = SessionState::Complete;
            let responses = next.responses();
            let profile = build_profile(
                &next.candidate_id,
                &responses,
                &lex,
                &next.variant_catalog(),
                self.model.as_ref(),
                &self.config,
            )?;
            {
                let store = self.store.lock().unwrap();
                store.register_variants(&next.variant_catalog())?;
                store.append_responses(&responses)?;
                store.save_profile(&profile)?;
            }
            SubmitOutcome::Complete { profile }
        };
        if let Some(key) = idempotency_key {
            next.last_submission = Some((key.to_string(), outcome.clone()));
        }
        self.persist(&next)?;

        if next.state == SessionState::Complete {
            let mut reg = self.registry.lock().unwrap();
            reg.active.remove(&next.candidate_id);
            *reg.completed.entry(next.candidate_id.clone()).or_default() += 1;
        }
        *s = next;
        Ok(outcome)
    }

    pub fn get_profile(&self, candidate_id: &str) -> Result<CandidateProfile> {
        self.store
            .lock()
            .unwrap()
            .load_profile(candidate_id)?
            .ok_or_else(|| Error::UnknownCandidate(candidate_id.to_string()))
    }

    /// Embeds and ranks items for a profiled candidate. Without explicit items the
    /// catalog is used, filtered to `context` when given.
    pub fn get_recommendations(
        &self,
        candidate_id: &str,
        context: Option<&str>,
        items: Option<&[CatalogItem]>,
    ) -> Result<Vec<Recommendation>> {
        let lex = self.lexicon()?;
        let profile = self.get_profile(candidate_id)?;
        let selected: Vec<CatalogItem> = items
            .unwrap_or(&self.catalog)
            .iter()
            .filter(|it| context.is_none_or(|c| it.context == c))
            .cloned()
            .collect();
        recommend(&profile.ev, &selected, &lex, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    use crate::lexicon::variant_profile;

    fn service(dir: &std::path::Path) -> ElicitationService {
        let cfg = EngineConfig::default();
        let store = ProfileStore::open(dir, &cfg).unwrap();
        ElicitationService::new(cfg, ServiceConfig::default(), Some(Lexicon::builtin()), store).unwrap()
    }

    fn rate_all(set: &VariantSet, value: i64) -> BTreeMap<String, i64> {
        set.variants.iter().map(|v| (v.variant_id.clone(), value)).collect()
    }

    #[test]
    fn fresh_session_covers_every_dimension() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let set = svc.create_session("alice").unwrap();
        assert_eq!(set.round_index, 0);
        assert_eq!(set.variants.len(), 5);
        let lex = Lexicon::builtin();
        let dims: BTreeSet<usize> =
            set.variants.iter().map(|v| variant_profile(&v.features, &lex).unwrap().argmax()).collect();
        assert_eq!(dims.len(), 5);
    }

    #[test]
    fn duplicate_active_session() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        svc.create_session("alice").unwrap();
        assert!(matches!(svc.create_session("alice"), Err(Error::DuplicateActiveSession(_))));
    }

    #[test]
    fn no_lexicon() {
        let d = tempfile::tempdir().unwrap();
        let cfg = EngineConfig::default();
        let svc = ElicitationService::new(cfg.clone(), ServiceConfig::default(), None, ProfileStore::open(d.path(), &cfg).unwrap())
            .unwrap();
        assert!(matches!(svc.create_session("a"), Err(Error::LexiconUnavailable)));
    }

    #[test]
    fn sessions_are_isolated() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let a = svc.create_session("alice").unwrap();
        let b = svc.create_session("bob").unwrap();
        assert_ne!(a.session_id, b.session_id);
        svc.submit_ratings(&a.session_id, &rate_all(&a, 4), None).unwrap();
        let bv = svc.get_session(&b.session_id).unwrap();
        assert_eq!(bv.round_index, 0);
        assert_eq!(bv.current.unwrap().variants, b.variants);
    }

    #[test]
    fn incomplete_and_invalid_ratings_leave_state() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let set = svc.create_session("alice").unwrap();
        let mut partial = rate_all(&set, 2);
        let dropped = partial.keys().next().unwrap().clone();
        partial.remove(&dropped);
        assert!(matches!(svc.submit_ratings(&set.session_id, &partial, None), Err(Error::IncompleteRatings(_))));
        let mut bad = rate_all(&set, 2);
        bad.insert(dropped.clone(), 9);
        assert!(matches!(svc.submit_ratings(&set.session_id, &bad, None), Err(Error::OutOfRangeRating { .. })));
        let mut extra = rate_all(&set, 2);
        extra.insert("ghost".into(), 1);
        assert!(matches!(svc.submit_ratings(&set.session_id, &extra, None), Err(Error::UnknownVariant(_))));
        assert_eq!(svc.get_session(&set.session_id).unwrap().round_index, 0);
        let next = svc.submit_ratings(&set.session_id, &rate_all(&set, 2), None).unwrap();
        match next {
            SubmitOutcome::NextRound { round } => {
                assert_eq!(round.round_index, 1);
                assert_eq!(round.variants.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idempotent_resubmission() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let set = svc.create_session("alice").unwrap();
        let r = rate_all(&set, 3);
        let a = svc.submit_ratings(&set.session_id, &r, Some("k1")).unwrap();
        let b = svc.submit_ratings(&set.session_id, &r, Some("k1")).unwrap();
        assert_eq!(a, b);
        assert_eq!(svc.get_session(&set.session_id).unwrap().round_index, 1);
    }

    #[test]
    fn full_session_recovers_prototype_dimension() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        let lex = Lexicon::builtin();
        let proto = EmotionVector::from_weights(vec![0.01, 0.0, 0.97, 0.01, 0.01]).unwrap();
        let mut set = svc.create_session("carol").unwrap();
        let profile = loop {
            let ratings = set
                .variants
                .iter()
                .map(|v| {
                    let p = variant_profile(&v.features, &lex).unwrap();
                    let a = crate::affinity::profile_affinity(&proto, &p).unwrap();
                    (v.variant_id.clone(), (4.0 * a).round() as i64)
                })
                .collect();
            match svc.submit_ratings(&set.session_id, &ratings, None).unwrap() {
                SubmitOutcome::NextRound { round } => set = round,
                SubmitOutcome::Complete { profile } => break profile,
            }
        };
        assert_eq!(profile.ev.argmax(), 2);
        let view = svc.get_session(&set.session_id).unwrap();
        assert_eq!(view.state, SessionState::Complete);
        assert_eq!(view.policies[..2], [RoundPolicy::Coverage, RoundPolicy::Coverage]);
        assert!(matches!(view.policies[2], RoundPolicy::Discrimination { first: 2, .. }));
        assert!(matches!(
            svc.submit_ratings(&set.session_id, &BTreeMap::new(), None),
            Err(Error::SessionNotActive(_))
        ));
        assert_eq!(svc.get_profile("carol").unwrap(), profile);
        // a completed candidate can be elicited again without key clashes
        svc.create_session("carol").unwrap();
    }

    #[test]
    fn idle_sessions_are_abandoned() {
        let d = tempfile::tempdir().unwrap();
        let now = Arc::new(AtomicU64::new(1_000));
        let clock = now.clone();
        let svc = service(d.path()).with_clock(Arc::new(move || clock.load(Ordering::SeqCst)));
        let set = svc.create_session("dave").unwrap();
        now.fetch_add(24 * 3600 + 1, Ordering::SeqCst);
        assert!(matches!(
            svc.submit_ratings(&set.session_id, &rate_all(&set, 1), None),
            Err(Error::SessionNotActive(_))
        ));
        assert_eq!(svc.get_session(&set.session_id).unwrap().state, SessionState::Abandoned);
        // abandoned responses never reach the training log
        assert!(svc.store.lock().unwrap().read_responses().unwrap().is_empty());
        svc.create_session("dave").unwrap();
    }

    #[test]
    fn sessions_survive_restart() {
        let d = tempfile::tempdir().unwrap();
        let set = {
            let svc = service(d.path());
            svc.create_session("erin").unwrap()
        };
        let svc = service(d.path());
        let view = svc.get_session(&set.session_id).unwrap();
        assert_eq!(view.current.unwrap().variants, set.variants);
        assert!(matches!(svc.create_session("erin"), Err(Error::DuplicateActiveSession(_))));
    }

    #[test]
    fn recommendations() {
        let d = tempfile::tempdir().unwrap();
        let svc = service(d.path());
        assert!(matches!(svc.get_recommendations("nobody", None, None), Err(Error::UnknownCandidate(_))));
        let store = svc.store.lock().unwrap().clone();
        let profile = CandidateProfile {
            candidate_id: "fay".into(),
            pv: crate::types::PersonalityVector::new(vec![0.0; 5], vec![false; 5]).unwrap(),
            ev: EmotionVector::one_hot(5, 3).unwrap(),
            class: None,
        };
        store.save_profile(&profile).unwrap();
        let recs = svc.get_recommendations("fay", Some("politics"), None).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs[0].item_id, "politics-4");
        let lex = Lexicon::builtin();
        for r in &recs {
            let p = variant_profile(&r.features, &lex).unwrap();
            assert_eq!(r.score, crate::affinity::profile_affinity(&profile.ev, &p).unwrap());
        }
        assert!(matches!(svc.get_recommendations("fay", Some("nowhere"), None), Err(Error::EmptyItemSet)));
    }
}
