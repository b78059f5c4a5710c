"""Traveling-wave spacetime codes on topographic maps, with circulant
state-space and self-attention reference encoders."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .lattice import DelayTable, TopographicLattice, build_lattice, delay_steps  # noqa: F401
from .wavesim import (  # noqa: F401
    KernelProfile,
    NetworkState,
    NeuronModel,
    Recording,
    StimulusEvent,
    build_network,
    measure_wave_speed,
    participation_fraction,
    run_protocol,
    simulate,
    step,
)
