"""Decentralized multi-user bandits with user-dependent rewards.

Users coordinate on an optimal user-channel matching using nothing but
collisions, in epochs of exploration, collision-coded estimate exchange and
exploitation.
"""
from .agent import Agent, Phase, ProtocolParams, offset_channel
from .env import ChannelEnvironment, ChannelModel, StepOutcome, ZeroAtomError
from .harness import (
    RunConfig,
    bound_constant,
    lockstep,
    run_episode,
    run_sweep,
    theoretical_bound,
)
from .matching import (
    DegenerateMatrix,
    EmptyAfterFilter,
    EnumerationLimit,
    GapResult,
    Matching,
    MeanMatrix,
    QuantizedMatrix,
    canonical_choice,
    decode_array,
    decode_value,
    encode_array,
    encode_value,
    filter_by_pin,
    gap_oracle,
    optimal_set_from_quantized,
    required_rounds,
)

__version__ = "0.1.0"
