"""Event-by-event simulation of photon EPRB and single-neutron Bell tests."""

from .errors import (
    ConfigError,
    DegenerateNormError,
    EmptyTableError,
    EventBellError,
    NormalizationError,
)
from .rng import RngStream
from .photon import (
    EventLog,
    EventRecord,
    ExperimentI,
    ExperimentII,
    ExperimentIII,
    PhotonState,
    StationSettings,
    run_experiment,
)
from .coincidence import (
    AnalysisConfig,
    CoincidenceTable,
    CorrelationResult,
    Pairing,
    chsh,
    correlations,
    count_all_pairs,
    count_coincidences,
    window_sweep,
)
from .neutron import (
    DlmBeamSplitter,
    InterferometerConfig,
    NeutronMessage,
    RunCounts,
    chsh_neutron,
    measure_correlation,
    random_chi_run,
    run_interferometer,
)
from .config import RunConfig, parse_config, render

__version__ = "0.1.0"
