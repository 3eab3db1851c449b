"""Cycle-level DRAM simulator for subarray-level parallelism (SALP-1, SALP-2, MASA)."""
from .config import (ALL_MODES, ConfigError, ControllerParams, CoreParams, EnergyParams,
                     Geometry, MappingPolicy, Mode, RowPolicy, SimConfig, TimingParams,
                     load_config)
from .controller import Controller, controller_state_bits, controller_state_bytes
from .dram import (Command, CommandKind, DramState, IllegalCommandError,
                   SimulationIntegrityError, build_timing_table)
from .engine import SimResult, Simulation, run
from .mapping import Coord, encode_address, map_address
from .stats import energy_of, summarize
from .trace import TraceEntry, load_trace, parse_trace, render_trace, synth_trace
from .verify import Violation, verify_stream

__version__ = "0.1.0"
