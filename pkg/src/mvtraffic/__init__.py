"""Traffic statistics and bufferless statistical multiplexing of 3D video traces."""

from .metrics import (CurvePoint, StreamStats, average_psnr, build_curves, combined_variability,
                      demand_cov, demand_stats, merged_mean, sequential_variability, view_stats)
from .mux import (LossEstimate, MuxScenario, ReplicationResult, StopRule, estimate_loss,
                  exact_loss_oracle, simulate_replication)
from .search import (AdmissionResult, CapacityResult, SearchConfig, admission_search,
                     find_cmin, find_jmax)
from .streamshape import (CombinedSequence, DemandSequence, MergedSequence, combine, gop_smooth,
                          sequential_merge, to_demand)
from .trace import (FrameRecord, GopPattern, MultiviewTrace, Representation, SynthSpec,
                    TraceFormatError, TraceMeta, TraceValidationError, parse_trace, read_trace,
                    serialize_trace, synthesize_trace, validate, write_trace)

__version__ = "0.1.0"
