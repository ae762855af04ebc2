//! Problem-level dispatch and the evaluation sweep: bounded parallelism,
//! order-stable trace output, and per-problem failure isolation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chatcot::engine::ToolRegistry;
use chatcot::{
    init_memory, run_sc, AnnotatedDialogue, ChatBackend, DatasetKind, DocIndex, Engine,
    EngineConfig, Exemplar, HashEmbedder, ModelRequest, Paragraph, Phase, ProblemRecord,
    Retriever, Role, RunTrace, ToolSpec, TraceMessage,
};

use crate::dataset::exemplar_index_text;
use crate::equiv::answer_equiv;
use crate::metrics::{compute_metrics, Metrics};
use crate::strategy::{build_baseline_prompt, substitute_tool_markers, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Engine(#[from] chatcot::EngineError),
    #[error(transparent)]
    Ensemble(#[from] chatcot::EnsembleError),
    #[error(transparent)]
    Memory(#[from] chatcot::MemoryError),
    #[error(transparent)]
    Retrieval(#[from] chatcot::RetrievalError),
    #[error(transparent)]
    Gateway(#[from] chatcot::GatewayError),
}

#[derive(Clone, Debug)]
pub struct RunnerOptions {
    pub strategy: Strategy,
    /// Self-consistency sample count; 1 means a single path.
    pub k: usize,
    pub engine: EngineConfig,
    /// Baseline shot count (5 for math-style, 4 for hotpot-style).
    pub shots: usize,
    /// Evidence paragraphs included in hotpot baseline prompts.
    pub evidence_k: usize,
    /// Seed for the baseline exemplar sampler.
    pub seed: u64,
    pub workers: usize,
    /// Query with the statement alone; index entries may embed solutions.
    pub index_embeds_solution: bool,
    /// Override texts for the default tool specs, matched by name.
    pub tool_overrides: Vec<ToolSpec>,
}

impl Default for RunnerOptions {
    fn default() -> Self {
        RunnerOptions {
            strategy: Strategy::ChatCot,
            k: 1,
            engine: EngineConfig::default(),
            shots: 5,
            evidence_k: 3,
            seed: 0,
            workers: 1,
            index_embeds_solution: true,
            tool_overrides: Vec::new(),
        }
    }
}

pub struct Harness {
    pub backend: Arc<dyn ChatBackend>,
    pub train: Vec<Exemplar>,
    pub annotated: Vec<AnnotatedDialogue>,
    pub options: RunnerOptions,
    train_retriever: Option<Retriever>,
}

impl Harness {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        train: Vec<Exemplar>,
        annotated: Vec<AnnotatedDialogue>,
        options: RunnerOptions,
    ) -> Result<Self, HarnessError> {
        let train_retriever = if train.is_empty() {
            None
        } else {
            let embedder: Arc<dyn chatcot::Embedder> = Arc::new(HashEmbedder::default());
            let docs: Vec<(String, String)> = train
                .iter()
                .enumerate()
                .map(|(i, ex)| {
                    (
                        format!("{i}"),
                        exemplar_index_text(ex, options.index_embeds_solution),
                    )
                })
                .collect();
            let index = DocIndex::build(embedder.as_ref(), &docs)?;
            Some(Retriever::new(embedder, index)?)
        };
        Ok(Harness {
            backend,
            train,
            annotated,
            options,
            train_retriever,
        })
    }

    fn apply_tool_overrides(&self, spec: ToolSpec) -> ToolSpec {
        match self
            .options
            .tool_overrides
            .iter()
            .find(|o| o.name == spec.name)
        {
            Some(o) => o.clone(),
            None => spec,
        }
    }

    fn registry_for(&self, problem: &ProblemRecord) -> Result<ToolRegistry, HarnessError> {
        let mut registry = ToolRegistry::new();
        match problem.dataset {
            DatasetKind::MathStyle => {
                registry
                    .register(
                        self.apply_tool_overrides(ToolSpec::calculator()),
                        chatcot::ToolBackend::Calculator,
                    )
                    .map_err(HarnessError::Engine)?;
                registry
                    .register(
                        self.apply_tool_overrides(ToolSpec::equation_solver()),
                        chatcot::ToolBackend::EquationSolver,
                    )
                    .map_err(HarnessError::Engine)?;
            }
            DatasetKind::HotpotStyle => {
                let embedder: Arc<dyn chatcot::Embedder> = Arc::new(HashEmbedder::default());
                let docs: Vec<(String, String)> = problem
                    .paragraphs
                    .iter()
                    .map(|p| (p.title.clone(), p.text.clone()))
                    .collect();
                let index = DocIndex::build(embedder.as_ref(), &docs)?;
                let retriever = Arc::new(Retriever::new(embedder, index)?);
                registry
                    .register(
                        self.apply_tool_overrides(ToolSpec::retriever()),
                        chatcot::ToolBackend::Retriever(retriever),
                    )
                    .map_err(HarnessError::Engine)?;
            }
        }
        Ok(registry)
    }

    fn retrieved_exemplars(&self, problem: &ProblemRecord, k: usize) -> Result<Vec<Exemplar>, HarnessError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let retriever = self.train_retriever.as_ref().ok_or_else(|| {
            HarnessError::Setup(
                "retrieval exemplars requested but no training exemplars were loaded".into(),
            )
        })?;
        let hits = retriever.top_k(&problem.statement, k)?;
        Ok(hits
            .iter()
            .filter_map(|(id, _)| id.parse::<usize>().ok())
            .filter_map(|i| self.train.get(i).cloned())
            .collect())
    }

    fn sampled_exemplars(&self, problem_index: usize, k: usize) -> Vec<Exemplar> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed ^ problem_index as u64);
        let mut pool: Vec<&Exemplar> = self.train.iter().collect();
        pool.shuffle(&mut rng);
        pool.into_iter().take(k).cloned().collect()
    }

    fn evidence_for(&self, problem: &ProblemRecord) -> Result<Vec<Paragraph>, HarnessError> {
        if problem.dataset != DatasetKind::HotpotStyle {
            return Ok(Vec::new());
        }
        let embedder: Arc<dyn chatcot::Embedder> = Arc::new(HashEmbedder::default());
        let docs: Vec<(String, String)> = problem
            .paragraphs
            .iter()
            .map(|p| (p.title.clone(), p.text.clone()))
            .collect();
        let index = DocIndex::build(embedder.as_ref(), &docs)?;
        let retriever = Retriever::new(embedder, index)?;
        let hits = retriever.top_k(&problem.statement, self.options.evidence_k)?;
        Ok(hits
            .iter()
            .filter_map(|(id, _)| {
                problem
                    .paragraphs
                    .iter()
                    .find(|p| &p.title == id)
                    .cloned()
            })
            .collect())
    }

    fn strategy_label(&self) -> String {
        if self.options.k > 1 {
            format!("{}+sc{}", self.options.strategy.label(), self.options.k)
        } else {
            self.options.strategy.label().to_string()
        }
    }

    fn run_chatcot(&self, problem: &ProblemRecord) -> Result<RunTrace, HarnessError> {
        let registry = self.registry_for(problem)?;
        let n_r = self.options.engine.memory.n_r;
        let n_a = self.options.engine.memory.n_a;
        if self.annotated.len() < n_a {
            return Err(HarnessError::Setup(format!(
                "need {n_a} annotated dialogues, have {}",
                self.annotated.len()
            )));
        }
        let retrieved = self.retrieved_exemplars(problem, n_r)?;
        let annotated: Vec<AnnotatedDialogue> = self.annotated[..n_a].to_vec();
        let memory = init_memory(
            &self.options.engine.memory,
            &registry.specs(),
            &retrieved,
            &annotated,
        )?;
        let engine = Engine::new(&self.options.engine, &registry, self.backend.as_ref());

        if self.options.k <= 1 {
            let outcome = engine.run(problem, &memory)?;
            return Ok(RunTrace::from_outcome(&outcome, self.strategy_label()));
        }

        let sc = run_sc(&engine, problem, &memory, self.options.k, answer_equiv)?;
        let winner = sc.answer.clone();
        let total_tokens: u64 = sc.outcomes.iter().map(|o| o.generated_tokens).sum();
        let winning = sc
            .outcomes
            .iter()
            .find(|o| {
                o.answer
                    .as_deref()
                    .is_some_and(|a| answer_equiv(a, &winner))
            })
            .or(sc.outcomes.first())
            .ok_or_else(|| HarnessError::Setup("self-consistency produced no runs".into()))?;
        let mut trace = RunTrace::from_outcome(winning, self.strategy_label());
        trace.answer = winner;
        trace.token_count = total_tokens;
        trace.generated_tokens = total_tokens;
        Ok(trace)
    }

    fn run_baseline(
        &self,
        problem: &ProblemRecord,
        problem_index: usize,
    ) -> Result<RunTrace, HarnessError> {
        let strategy = self.options.strategy;
        let exemplars = match strategy {
            Strategy::CotWithRetrieval => self.retrieved_exemplars(problem, self.options.shots)?,
            _ => self.sampled_exemplars(problem_index, self.options.shots),
        };
        let evidence = self.evidence_for(problem)?;
        let prompt = build_baseline_prompt(strategy, problem, &exemplars, &evidence)
            .map_err(|e| HarnessError::Setup(e.to_string()))?;

        let request = ModelRequest {
            messages: prompt.clone(),
            temperature: self.options.engine.temperature,
            max_new_tokens: self.options.engine.max_new_tokens,
            n_samples: self.options.k.max(1),
        };
        let response = self.backend.complete(&request)?;

        // the registry only matters for cot-tool marker execution
        let registry = self.registry_for(problem)?;
        let mut processed: Vec<(String, Vec<chatcot::ToolCall>)> = Vec::new();
        for completion in &response.completions {
            if strategy == Strategy::CotWithTool {
                processed.push(substitute_tool_markers(
                    completion,
                    &registry,
                    self.options.engine.retrieval_k,
                ));
            } else {
                processed.push((completion.clone(), Vec::new()));
            }
        }

        let answers: Vec<String> = processed
            .iter()
            .filter_map(|(text, _)| chatcot::extract_answer(text))
            .filter(|a| !a.is_empty())
            .collect();
        let answer = if answers.is_empty() {
            String::new()
        } else if answers.len() == 1 {
            answers[0].clone()
        } else {
            chatcot::self_consistency(&answers, answer_equiv).winner
        };

        let chosen = processed
            .iter()
            .find(|(text, _)| {
                chatcot::extract_answer(text)
                    .map(|a| !answer.is_empty() && answer_equiv(&a, &answer))
                    .unwrap_or(false)
            })
            .or(processed.first())
            .cloned()
            .unwrap_or_default();

        let mut messages: Vec<TraceMessage> = prompt.iter().map(TraceMessage::from).collect();
        let completion_phase = if chatcot::extract_boxed(&chosen.0).is_some() {
            Phase::Conclusion
        } else {
            Phase::Reasoning
        };
        messages.push(TraceMessage {
            role: Role::Model,
            phase: completion_phase,
            content: chosen.0.clone(),
        });

        Ok(RunTrace {
            problem_id: problem.id.clone(),
            messages,
            answer,
            token_count: response.generated_tokens,
            strategy: self.strategy_label(),
            tool_calls: chosen.1,
            forced_conclusion: false,
            generated_tokens: response.generated_tokens,
            gold: problem.answer.clone(),
            category: Some(problem.category.clone()),
        })
    }

    /// Runs one problem under the configured strategy.
    pub fn run_problem(
        &self,
        problem: &ProblemRecord,
        problem_index: usize,
    ) -> Result<RunTrace, HarnessError> {
        match self.options.strategy {
            Strategy::ChatCot => self.run_chatcot(problem),
            _ => self.run_baseline(problem, problem_index),
        }
    }

    fn failure_trace(&self, problem: &ProblemRecord, error: &HarnessError) -> RunTrace {
        tracing::warn!(problem = %problem.id, error = %error, "problem failed; recording empty answer");
        RunTrace {
            problem_id: problem.id.clone(),
            messages: Vec::new(),
            answer: String::new(),
            token_count: 0,
            strategy: self.strategy_label(),
            tool_calls: Vec::new(),
            forced_conclusion: false,
            generated_tokens: 0,
            gold: problem.answer.clone(),
            category: Some(problem.category.clone()),
        }
    }

    /// Evaluates every problem, producing exactly one trace per problem in
    /// input order, and the metrics over those traces.
    pub fn evaluate(&self, problems: &[ProblemRecord]) -> (Metrics, Vec<RunTrace>) {
        let workers = self.options.workers.max(1).min(problems.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RunTrace>>> = Mutex::new(vec![None; problems.len()]);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= problems.len() {
                        break;
                    }
                    let trace = match self.run_problem(&problems[i], i) {
                        Ok(t) => t,
                        Err(e) => self.failure_trace(&problems[i], &e),
                    };
                    slots.lock().expect("slot lock")[i] = Some(trace);
                });
            }
        });

        let traces: Vec<RunTrace> = slots
            .into_inner()
            .expect("slot lock")
            .into_iter()
            .map(|t| t.expect("every slot filled"))
            .collect();
        let metrics = compute_metrics(&traces, crate::equiv::EquivOptions::default());
        (metrics, traces)
    }
}
