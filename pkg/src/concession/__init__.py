"""Tanh concession-curve modelling, fitting and negotiation simulation."""

from .cluster import (
    AgreementMatrix,
    ClusterReport,
    LabeledVector,
    agglomerate,
    cosine_distance,
    cut_to_k,
    davies_bouldin,
    fleiss_kappa,
    select_k,
    silhouette,
)
from .fitting import FitKind, FitOptions, TanhFit, fit_corpus, fit_quality, fit_tanh, initial_guess
from .ingest import Corpus, extract_trajectories, load_corpus, parse_transcripts, write_corpus
from .metrics import (
    ConcessionMetrics,
    CorpusScaler,
    MetricsOptions,
    active_window_length,
    burstiness,
    concession_metrics,
    cri,
    cri_star,
    metrics_report,
    minmax_scale,
    summarize,
)
from .model import (
    ELBOW_KAPPA,
    ELBOW_WIDTH,
    ElbowWindow,
    OfferTrajectory,
    PowerLawParams,
    TanhParams,
    elbow_window,
    power_law_offer,
    sample_schedule,
    tanh_speed,
    tanh_value,
)
from .protocol.engine import run_batch, run_negotiation, scripted_decision
from .protocol.scenarios import PRESETS, preset, scenario_agents
from .protocol.types import AgentConfig, NegotiationTranscript, Outcome, ScenarioConfig

__version__ = "0.1.0"
