"""Graded-vigilance multi-agent debate over sparse communication topologies."""

from .engine import DebateConfig, DebateTranscript, SynthesisMode, fingerprint, run_debate, synthesize
from .evaluation import compute_dwl, judge_pair, run_ablation_grid, run_pairwise_eval
from .topology import TopologyKind, analyze, build_plan
from .vigilance import PromptTemplate, build_ladder

__all__ = [
    "DebateConfig",
    "DebateTranscript",
    "PromptTemplate",
    "SynthesisMode",
    "TopologyKind",
    "analyze",
    "build_ladder",
    "build_plan",
    "compute_dwl",
    "fingerprint",
    "judge_pair",
    "run_ablation_grid",
    "run_debate",
    "run_pairwise_eval",
    "synthesize",
]
