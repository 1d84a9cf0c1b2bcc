from ._core import (
    ScenarioError,
    SniperError,
    ciphertext_length,
    merge_candidates,
    mine_patterns,
    run_scenario,
    score,
)

__all__ = [
    "ScenarioError",
    "SniperError",
    "ciphertext_length",
    "merge_candidates",
    "mine_patterns",
    "run_scenario",
    "score",
]
