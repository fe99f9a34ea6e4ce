"""coldprof: post-mortem analyzer for cold-start library usage traces."""

__version__ = "0.1.0"

from .cct import CallingContextTree, CctNode, merge
from .detector import Category, DetectorConfig, Finding, detect, drill_down, rank
from .ingest import ProfileBundle, ingest
from .metrics import (
    GateResult,
    LibraryStats,
    confidence_interval,
    init_ratio,
    library_stats,
    utilization,
)
from .package_mapper import (
    ModuleKind,
    ModulePath,
    ModuleTree,
    RootConfig,
    build_module_tree,
    library_time,
    map_frame,
    package_time,
    total_initialization,
)
from .simulate import SimSpec, check_rare_detectability, simulate
from .trace_model import (
    CallPath,
    Frame,
    ImportRecord,
    InvocationMeta,
    InvocationTrace,
    Phase,
    SampleRecord,
    decode_record,
    encode_record,
    validate_trace,
)
