"""Python bindings for the hafrm training core."""

from ._hafrm import (
    ConfigError,
    ContractError,
    Error,
    FormatError,
    NumericError,
    RewardModel,
    policy_loss_dpo,
    reward_loss,
    run_cli,
    synth_generate,
    truth_score,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "Error",
    "FormatError",
    "NumericError",
    "RewardModel",
    "policy_loss_dpo",
    "reward_loss",
    "run_cli",
    "synth_generate",
    "truth_score",
]
